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

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aggd/embedding_cache.h"
#include "aggd/encoder.h"
#include "aggd/types.h"

namespace aggd {

inline constexpr std::string_view kAdversarialIdPrefix = "adv::";

// Corpus rows followed by injected adversarial rows, searched exhaustively.
struct RetrievalIndex {
    std::vector<std::string> ids;
    MatrixF vectors;
    std::vector<bool> adversarial;

    std::size_t size() const { return ids.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
    std::size_t adversarial_count() const;
};

// Appends `adversarial_vectors` with ids "adv::0", "adv::1", ... Throws
// InvalidArgument on a dim mismatch, a duplicate corpus id, or a non-finite
// value.
RetrievalIndex build_index(const EmbeddingCache& corpus, const Matrix& adversarial_vectors);

// Encodes each adversarial passage with `enc` and appends it.
RetrievalIndex build_index(const EmbeddingCache& corpus, std::span<const TokenSequence> adversarial,
                           const Encoder& enc);

struct Hit {
    std::size_t row = 0;
    double score = 0.0;
};

using RankedList = std::vector<Hit>;

// Exact top-k by dot product. Ties: corpus rows before adversarial rows, then
// lexicographic id.
RankedList topk(const RetrievalIndex& index, const Vector& query, std::size_t k);

struct EvalReport {
    std::map<std::size_t, double> asr;  // k_r -> fraction of test queries hit
    double retacc = 1.0;
    std::size_t n_q = 0;
    std::size_t n_val = 0;
    std::vector<std::string> query_ids;
    // Rank of the first adversarial row within the top max(k_r), if any.
    std::vector<std::optional<std::size_t>> first_adversarial_rank;

    double success_rate() const { return 1.0 - retacc; }
    nlohmann::json to_json() const;
};

// ASR(k) = fraction of rows of `queries` whose top-k contains an adversarial
// row. Fills asr, n_q and the per-query fields of the report.
EvalReport attack_success_rate(const RetrievalIndex& index, const Matrix& queries, std::span<const std::size_t> ks,
                               std::span<const std::string> query_ids = {});

// Validation query vectors paired row-wise with their gold passage vectors.
struct ValidationSet {
    Matrix queries;
    Matrix gold;

    std::size_t size() const { return static_cast<std::size_t>(queries.rows()); }
};

// Fraction of pairs with Sim(q, gold) strictly greater than the best
// adversarial similarity. No adversarial rows gives 1.
double retrieval_accuracy(const ValidationSet& validation, const Matrix& adversarial_vectors);

}  // namespace aggd
