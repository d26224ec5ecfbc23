// Copyright (C) 2026 The aggd-lab Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aggd/types.h"

namespace aggd {

enum class EncoderKind { kMeanPool, kTanhProjection, kRemote };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

// Token embedding rows e_v, |V| x dim.
struct EmbeddingTable {
    Matrix matrix;

    std::size_t vocab_size() const { return static_cast<std::size_t>(matrix.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(matrix.cols()); }

    // Entries uniform in [-1, 1] from a seeded generator.
    static EmbeddingTable random(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);
};

// Encoded query set. `mean` is the only statistic the attack loss needs:
// similarity is linear in the query vector, so the mean loss over queries
// equals the loss against their mean.
struct QueryBundle {
    Matrix vectors;  // n_q x dim_out; empty for a remote-only bundle
    Vector mean;
    std::optional<std::string> remote_handle;

    std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }
};

// Builds a bundle from already-encoded query rows. Throws on zero rows.
QueryBundle make_query_bundle(Matrix vectors);

// Row i is the gradient of the loss with respect to the embedding of the
// token at position i.
using GradientMatrix = Matrix;

struct LossGradient {
    double loss = 0.0;
    GradientMatrix grad;
};

// Dense encoder seen by the attack. Implementations are immutable after
// construction, so every const method may be called concurrently.
class Encoder {
 public:
    virtual ~Encoder() = default;

    virtual EncoderKind kind() const = 0;
    // Width of encoded vectors.
    virtual std::size_t dim() const = 0;
    virtual std::size_t vocab_size() const = 0;
    // Input token embeddings, or nullptr when the encoder does not expose them.
    virtual const EmbeddingTable* embedding_table() const = 0;

    virtual Vector encode_passage(const TokenSequence& seq) const = 0;
    virtual Matrix encode_passages(std::span<const TokenSequence> seqs) const;

    // l(a) = -mean . E_p(a).
    virtual double loss(const TokenSequence& seq, const QueryBundle& queries) const;
    // One loss per sequence; remote encoders pipeline these.
    virtual std::vector<double> losses(std::span<const TokenSequence> seqs, const QueryBundle& queries) const;

    virtual LossGradient loss_gradient(const TokenSequence& seq, const QueryBundle& queries) const = 0;
};

// Encodes each sequence as a query (built-in encoders share one tower).
QueryBundle encode_queries(const Encoder& enc, std::span<const TokenSequence> queries);

// u = (1/m) sum_i e_{t_i}.
class MeanPoolEncoder final : public Encoder {
 public:
    explicit MeanPoolEncoder(EmbeddingTable table);

    EncoderKind kind() const override { return EncoderKind::kMeanPool; }
    std::size_t dim() const override { return table_.dim(); }
    std::size_t vocab_size() const override { return table_.vocab_size(); }
    const EmbeddingTable* embedding_table() const override { return &table_; }

    Vector encode_passage(const TokenSequence& seq) const override;
    LossGradient loss_gradient(const TokenSequence& seq, const QueryBundle& queries) const override;

 private:
    EmbeddingTable table_;
};

// tanh(W u + b) over the mean-pooled token embeddings u. The nonlinearity makes
// the first-order swap estimate inexact.
class TanhProjectionEncoder final : public Encoder {
 public:
    TanhProjectionEncoder(EmbeddingTable table, Matrix weights, Vector bias);

    // Table, W and b all uniform in [-1, 1] from one seeded generator.
    static TanhProjectionEncoder random(std::size_t vocab_size, std::size_t dim_in, std::size_t dim_out,
                                        std::uint64_t seed);

    EncoderKind kind() const override { return EncoderKind::kTanhProjection; }
    std::size_t dim() const override { return static_cast<std::size_t>(weights_.rows()); }
    std::size_t vocab_size() const override { return table_.vocab_size(); }
    const EmbeddingTable* embedding_table() const override { return &table_; }

    const Matrix& weights() const { return weights_; }
    const Vector& bias() const { return bias_; }

    Vector encode_passage(const TokenSequence& seq) const override;
    LossGradient loss_gradient(const TokenSequence& seq, const QueryBundle& queries) const override;

 private:
    EmbeddingTable table_;
    Matrix weights_;  // dim_out x dim_in
    Vector bias_;
};

// Mean of the embedding rows of `seq`. Throws InvalidArgument on an empty
// sequence or an out-of-range id.
Vector mean_pool(const EmbeddingTable& table, const TokenSequence& seq);

}  // namespace aggd
