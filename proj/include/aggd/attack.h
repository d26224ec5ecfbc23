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

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aggd/encoder.h"
#include "aggd/types.h"
#include "aggd/vocabulary.h"

namespace aggd {

struct ValidationSet;

enum class Strategy { kAggd, kHotFlip, kRandom };
enum class InitMode { kUniformRandom, kFixedToken, kCorpusSample };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view name);

struct AttackConfig {
    std::size_t m = 30;            // passage length in tokens
    std::size_t n = 150;           // candidate set size
    std::size_t iterations = 2000; // N
    Strategy strategy = Strategy::kAggd;
    std::uint64_t seed = 0;
    InitMode init = InitMode::kUniformRandom;
    TokenId fixed_token = 0;
    std::size_t log_eval_every = 0;  // 0 disables validation logging
    bool record_wall_time = false;   // wall_ms is 0 unless set, keeping traces byte-reproducible

    // Throws InvalidArgument on a violated bound; returns non-fatal warnings.
    std::vector<std::string> validate() const;

    // k = floor(n / m); AGGD's per-position window width.
    std::size_t per_position_k() const { return n / m; }
};

struct Candidate {
    std::size_t position = 0;
    TokenId token = 0;

    auto operator<=>(const Candidate&) const = default;
};

// Sorted by (position, token), no duplicates.
using CandidateSet = std::vector<Candidate>;

// m x |V|; entry (i, v) = -e_v . grad_i, the first-order estimate of the loss
// decrease from placing token v at position i.
using ScoreMatrix = Matrix;

// Per position, token ids ordered by score descending, ties by ascending id.
using TokenRanking = std::vector<std::vector<TokenId>>;

struct IterationRecord {
    std::size_t iteration = 0;
    double loss = 0.0;  // loss after this iteration
    bool accepted = false;
    std::size_t depth = 0;  // tier searched in this iteration (AGGD), else 0
    std::size_t evaluated = 0;
    double wall_ms = 0.0;
    std::optional<double> retacc;
};

struct AttackTrace {
    std::vector<IterationRecord> records;
    bool exhausted = false;
    std::size_t gradient_evaluations = 0;

    // Columns: iter,loss,accepted,depth,evaluated,wall_ms[,retacc]. The retacc
    // column is present when any record carries a sample.
    void write_csv(std::ostream& out) const;
};

struct AttackResult {
    TokenSequence passage;
    double loss = 0.0;
    AttackTrace trace;
};

struct BestCandidate {
    std::optional<Candidate> best;  // set only on strict improvement
    double loss = 0.0;              // best loss found; the current loss when nothing improves
    std::size_t evaluated = 0;
};

// Initial adversarial passage. Uses its own generator stream derived from
// config.seed, independent of the position-sampling stream. `corpus` holds
// tokenized passages and is required for InitMode::kCorpusSample.
TokenSequence init_passage(const AttackConfig& config, const Vocabulary& vocab,
                           std::span<const TokenSequence> corpus = {});

ScoreMatrix scores_from_gradient(const EmbeddingTable& table, const GradientMatrix& grad);

// One gradient evaluation. Throws InvalidArgument if the encoder exposes no
// embedding table.
ScoreMatrix score_tokens(const Encoder& enc, const TokenSequence& passage, const QueryBundle& queries);

TokenRanking rank_tokens(const ScoreMatrix& scores);

// Union over positions of the rank window [d*k, min((d+1)*k, |V|)).
CandidateSet build_aggd_candidates(const ScoreMatrix& scores, std::size_t k, std::size_t depth);
CandidateSet build_aggd_candidates(const TokenRanking& ranking, std::size_t k, std::size_t depth);

// Top-n tokens at one position.
CandidateSet build_hotflip_candidates(const ScoreMatrix& scores, std::size_t position, std::size_t n);

// n tokens uniform with replacement over [0, vocab_size), deduplicated.
// min(n, |V|) distinct tokens drawn uniformly at `position`.
CandidateSet build_random_candidates(std::mt19937_64& rng, std::size_t position, std::size_t n,
                                     std::size_t vocab_size);

// Evaluates every swap and returns the strict-improvement minimizer under the
// (loss, position, token) order.
BestCandidate best_candidate(const Encoder& enc, const TokenSequence& passage, const QueryBundle& queries,
                             const CandidateSet& candidates, std::optional<double> current_loss = std::nullopt);

// Greedy evaluate-and-accept loop for all three strategies. `validation`
// enables RetAcc samples every config.log_eval_every iterations.
AttackResult run_attack(const Encoder& enc, const QueryBundle& queries, const AttackConfig& config,
                        TokenSequence initial, const ValidationSet* validation = nullptr);

}  // namespace aggd
