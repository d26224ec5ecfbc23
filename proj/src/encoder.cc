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

#include "aggd/encoder.h"

#include <random>

namespace aggd {

namespace {

void
check_query_dim(const Encoder& enc, const QueryBundle& queries) {
    if (static_cast<std::size_t>(queries.mean.size()) != enc.dim()) {
        throw InvalidArgument("query dimension " + std::to_string(queries.mean.size()) +
                              " does not match encoder dimension " + std::to_string(enc.dim()));
    }
}

Matrix
uniform_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) = dist(rng);
        }
    }
    return m;
}

}  // namespace

std::string_view
to_string(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::kMeanPool:
            return "mean-pool";
        case EncoderKind::kTanhProjection:
            return "tanh-projection";
        case EncoderKind::kRemote:
            return "remote";
    }
    return "unknown";
}

EncoderKind
parse_encoder_kind(std::string_view name) {
    if (name == "mean-pool") {
        return EncoderKind::kMeanPool;
    }
    if (name == "tanh-projection" || name == "tanh") {
        return EncoderKind::kTanhProjection;
    }
    if (name == "remote") {
        return EncoderKind::kRemote;
    }
    throw InvalidArgument("unknown encoder kind '" + std::string(name) + "'");
}

EmbeddingTable
EmbeddingTable::random(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return EmbeddingTable{uniform_matrix(rng, vocab_size, dim)};
}

QueryBundle
make_query_bundle(Matrix vectors) {
    if (vectors.rows() == 0) {
        throw InvalidArgument("query set is empty");
    }
    QueryBundle qb;
    qb.mean = vectors.colwise().sum().transpose() / static_cast<double>(vectors.rows());
    qb.vectors = std::move(vectors);
    return qb;
}

Matrix
Encoder::encode_passages(std::span<const TokenSequence> seqs) const {
    Matrix out(seqs.size(), dim());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        out.row(i) = encode_passage(seqs[i]).transpose();
    }
    return out;
}

double
Encoder::loss(const TokenSequence& seq, const QueryBundle& queries) const {
    check_query_dim(*this, queries);
    return -queries.mean.dot(encode_passage(seq));
}

std::vector<double>
Encoder::losses(std::span<const TokenSequence> seqs, const QueryBundle& queries) const {
    std::vector<double> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) {
        out.push_back(loss(s, queries));
    }
    return out;
}

QueryBundle
encode_queries(const Encoder& enc, std::span<const TokenSequence> queries) {
    if (queries.empty()) {
        throw InvalidArgument("query set is empty");
    }
    return make_query_bundle(enc.encode_passages(queries));
}

Vector
mean_pool(const EmbeddingTable& table, const TokenSequence& seq) {
    if (seq.empty()) {
        throw InvalidArgument("cannot encode an empty token sequence");
    }
    Vector u = Vector::Zero(static_cast<Eigen::Index>(table.dim()));
    for (TokenId id : seq) {
        if (id < 0 || static_cast<std::size_t>(id) >= table.vocab_size()) {
            throw InvalidArgument("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                                  std::to_string(table.vocab_size()));
        }
        u += table.matrix.row(id).transpose();
    }
    return u / static_cast<double>(seq.size());
}

MeanPoolEncoder::MeanPoolEncoder(EmbeddingTable table) : table_(std::move(table)) {
    if (table_.vocab_size() == 0 || table_.dim() == 0 || !table_.matrix.allFinite()) {
        throw InvalidArgument("mean-pool encoder needs a non-empty finite embedding table");
    }
}

Vector
MeanPoolEncoder::encode_passage(const TokenSequence& seq) const {
    return mean_pool(table_, seq);
}

LossGradient
MeanPoolEncoder::loss_gradient(const TokenSequence& seq, const QueryBundle& queries) const {
    LossGradient out;
    out.loss = loss(seq, queries);
    const Eigen::RowVectorXd row = -queries.mean.transpose() / static_cast<double>(seq.size());
    out.grad = row.replicate(static_cast<Eigen::Index>(seq.size()), 1);
    return out;
}

TanhProjectionEncoder::TanhProjectionEncoder(EmbeddingTable table, Matrix weights, Vector bias)
    : table_(std::move(table)), weights_(std::move(weights)), bias_(std::move(bias)) {
    if (table_.vocab_size() == 0 || table_.dim() == 0 || !table_.matrix.allFinite()) {
        throw InvalidArgument("tanh encoder needs a non-empty finite embedding table");
    }
    if (static_cast<std::size_t>(weights_.cols()) != table_.dim() || weights_.rows() == 0) {
        throw InvalidArgument("projection weights must be dim_out x " + std::to_string(table_.dim()));
    }
    if (bias_.size() != weights_.rows()) {
        throw InvalidArgument("projection bias must have dim_out entries");
    }
    if (!weights_.allFinite() || !bias_.allFinite()) {
        throw InvalidArgument("projection parameters must be finite");
    }
}

TanhProjectionEncoder
TanhProjectionEncoder::random(std::size_t vocab_size, std::size_t dim_in, std::size_t dim_out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix table = uniform_matrix(rng, vocab_size, dim_in);
    Matrix weights = uniform_matrix(rng, dim_out, dim_in);
    Vector bias = uniform_matrix(rng, dim_out, 1).col(0);
    return TanhProjectionEncoder(EmbeddingTable{std::move(table)}, std::move(weights), std::move(bias));
}

Vector
TanhProjectionEncoder::encode_passage(const TokenSequence& seq) const {
    return (weights_ * mean_pool(table_, seq) + bias_).array().tanh().matrix();
}

LossGradient
TanhProjectionEncoder::loss_gradient(const TokenSequence& seq, const QueryBundle& queries) const {
    check_query_dim(*this, queries);
    const Vector h = encode_passage(seq);
    LossGradient out;
    out.loss = -queries.mean.dot(h);
    // dl/du = -W^T diag(1 - h^2) qbar, and du/de_{t_i} = 1/m for every position.
    const Vector local = (1.0 - h.array().square()) * queries.mean.array();
    const Vector du = -(weights_.transpose() * local) / static_cast<double>(seq.size());
    out.grad = du.transpose().replicate(static_cast<Eigen::Index>(seq.size()), 1);
    return out;
}

}  // namespace aggd
