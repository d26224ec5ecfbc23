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

#include "aggd/attack.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "aggd/retrieval.h"

namespace aggd {

namespace {

// Independent generator streams derived from one run seed.
enum class Stream : std::uint64_t { kInit = 1, kPositions = 2 };

std::mt19937_64
make_rng(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

bool
ranks_ahead(const double* row, TokenId a, TokenId b) {
    if (row[a] != row[b]) {
        return row[a] > row[b];
    }
    return a < b;
}

std::vector<TokenId>
top_tokens(const ScoreMatrix& scores, std::size_t position, std::size_t count) {
    const auto vocab = static_cast<std::size_t>(scores.cols());
    count = std::min(count, vocab);
    std::vector<TokenId> ids(vocab);
    std::iota(ids.begin(), ids.end(), 0);
    const double* row = scores.data() + position * vocab;
    auto cmp = [row](TokenId a, TokenId b) { return ranks_ahead(row, a, b); };
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count), ids.end(), cmp);
    ids.resize(count);
    return ids;
}

void
normalize(CandidateSet& set) {
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
}

// Shortest text that reads back to the same double.
std::string
format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string_view
to_string(Strategy s) {
    switch (s) {
        case Strategy::kAggd:
            return "aggd";
        case Strategy::kHotFlip:
            return "hotflip";
        case Strategy::kRandom:
            return "random";
    }
    return "unknown";
}

Strategy
parse_strategy(std::string_view name) {
    if (name == "aggd") {
        return Strategy::kAggd;
    }
    if (name == "hotflip") {
        return Strategy::kHotFlip;
    }
    if (name == "random") {
        return Strategy::kRandom;
    }
    throw InvalidArgument("unknown strategy '" + std::string(name) + "'");
}

std::string_view
to_string(InitMode mode) {
    switch (mode) {
        case InitMode::kUniformRandom:
            return "uniform-random";
        case InitMode::kFixedToken:
            return "fixed-token";
        case InitMode::kCorpusSample:
            return "corpus-sample";
    }
    return "unknown";
}

InitMode
parse_init_mode(std::string_view name) {
    if (name == "uniform-random") {
        return InitMode::kUniformRandom;
    }
    if (name == "fixed-token") {
        return InitMode::kFixedToken;
    }
    if (name == "corpus-sample") {
        return InitMode::kCorpusSample;
    }
    throw InvalidArgument("unknown init mode '" + std::string(name) + "'");
}

std::vector<std::string>
AttackConfig::validate() const {
    if (m < 1) {
        throw InvalidArgument("m must be at least 1");
    }
    if (n < 1) {
        throw InvalidArgument("n must be at least 1");
    }
    if (iterations < 1) {
        throw InvalidArgument("iterations (N) must be at least 1");
    }
    std::vector<std::string> warnings;
    if (strategy == Strategy::kAggd) {
        if (n < m) {
            throw InvalidArgument("aggd needs n >= m (got n=" + std::to_string(n) + ", m=" + std::to_string(m) + ")");
        }
        if (n % m != 0) {
            warnings.push_back("n=" + std::to_string(n) + " is not a multiple of m=" + std::to_string(m) +
                               "; aggd evaluates " + std::to_string(per_position_k() * m) + " candidates per tier");
        }
    }
    return warnings;
}

void
AttackTrace::write_csv(std::ostream& out) const {
    const bool with_retacc =
        std::any_of(records.begin(), records.end(), [](const IterationRecord& r) { return r.retacc.has_value(); });
    out << "iter,loss,accepted,depth,evaluated,wall_ms" << (with_retacc ? ",retacc" : "") << '\n';
    for (const auto& r : records) {
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", r.wall_ms);
        out << r.iteration << ',' << format_double(r.loss) << ',' << (r.accepted ? 1 : 0) << ',' << r.depth << ','
            << r.evaluated << ',' << wall;
        if (with_retacc) {
            out << ',';
            if (r.retacc) {
                out << format_double(*r.retacc);
            }
        }
        out << '\n';
    }
}

TokenSequence
init_passage(const AttackConfig& config, const Vocabulary& vocab, std::span<const TokenSequence> corpus) {
    if (config.m < 1) {
        throw InvalidArgument("m must be at least 1");
    }
    auto rng = make_rng(config.seed, Stream::kInit);
    switch (config.init) {
        case InitMode::kUniformRandom: {
            std::uniform_int_distribution<TokenId> dist(0, static_cast<TokenId>(vocab.size()) - 1);
            TokenSequence seq(config.m);
            for (auto& id : seq) {
                id = dist(rng);
            }
            return seq;
        }
        case InitMode::kFixedToken:
            if (!vocab.contains(config.fixed_token)) {
                throw InvalidArgument("fixed init token " + std::to_string(config.fixed_token) +
                                      " out of range for vocabulary of size " + std::to_string(vocab.size()));
            }
            return TokenSequence(config.m, config.fixed_token);
        case InitMode::kCorpusSample: {
            if (corpus.empty()) {
                throw InvalidArgument("corpus-sample init needs a non-empty corpus");
            }
            std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
            TokenSequence seq = corpus[pick(rng)];
            seq.resize(config.m, vocab.unk_id());
            return seq;
        }
    }
    throw InvalidArgument("unknown init mode");
}

ScoreMatrix
scores_from_gradient(const EmbeddingTable& table, const GradientMatrix& grad) {
    if (static_cast<std::size_t>(grad.cols()) != table.dim()) {
        throw InvalidArgument("gradient width " + std::to_string(grad.cols()) + " does not match embedding dim " +
                              std::to_string(table.dim()));
    }
    return -(grad * table.matrix.transpose());
}

ScoreMatrix
score_tokens(const Encoder& enc, const TokenSequence& passage, const QueryBundle& queries) {
    const EmbeddingTable* table = enc.embedding_table();
    if (table == nullptr) {
        throw InvalidArgument("encoder exposes no token embedding table; cannot score tokens");
    }
    return scores_from_gradient(*table, enc.loss_gradient(passage, queries).grad);
}

TokenRanking
rank_tokens(const ScoreMatrix& scores) {
    TokenRanking ranking;
    ranking.reserve(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        ranking.push_back(top_tokens(scores, static_cast<std::size_t>(i), static_cast<std::size_t>(scores.cols())));
    }
    return ranking;
}

CandidateSet
build_aggd_candidates(const ScoreMatrix& scores, std::size_t k, std::size_t depth) {
    const auto vocab = static_cast<std::size_t>(scores.cols());
    const std::size_t begin = depth * k;
    if (k == 0 || begin >= vocab) {
        return {};
    }
    const std::size_t end = std::min(begin + k, vocab);
    CandidateSet set;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        auto top = top_tokens(scores, static_cast<std::size_t>(i), end);
        for (std::size_t r = begin; r < end; ++r) {
            set.push_back({static_cast<std::size_t>(i), top[r]});
        }
    }
    normalize(set);
    return set;
}

CandidateSet
build_aggd_candidates(const TokenRanking& ranking, std::size_t k, std::size_t depth) {
    CandidateSet set;
    if (k == 0) {
        return set;
    }
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        const auto& order = ranking[i];
        const std::size_t begin = depth * k;
        if (begin >= order.size()) {
            continue;
        }
        const std::size_t end = std::min(begin + k, order.size());
        for (std::size_t r = begin; r < end; ++r) {
            set.push_back({i, order[r]});
        }
    }
    normalize(set);
    return set;
}

CandidateSet
build_hotflip_candidates(const ScoreMatrix& scores, std::size_t position, std::size_t n) {
    if (position >= static_cast<std::size_t>(scores.rows())) {
        throw InvalidArgument("position " + std::to_string(position) + " out of range");
    }
    CandidateSet set;
    for (TokenId t : top_tokens(scores, position, n)) {
        set.push_back({position, t});
    }
    normalize(set);
    return set;
}

CandidateSet
build_random_candidates(std::mt19937_64& rng, std::size_t position, std::size_t n, std::size_t vocab_size) {
    if (vocab_size == 0) {
        throw InvalidArgument("vocabulary is empty");
    }
    // Uniform n-subset of the vocabulary (Floyd's sampling), so n >= |V|
    // yields every token.
    n = std::min(n, vocab_size);
    std::set<TokenId> picked;
    for (std::size_t j = vocab_size - n; j < vocab_size; ++j) {
        const auto t = static_cast<TokenId>(std::uniform_int_distribution<std::size_t>(0, j)(rng));
        if (!picked.insert(t).second) {
            picked.insert(static_cast<TokenId>(j));
        }
    }
    CandidateSet set;
    set.reserve(n);
    for (TokenId t : picked) {
        set.push_back({position, t});
    }
    return set;
}

BestCandidate
best_candidate(const Encoder& enc, const TokenSequence& passage, const QueryBundle& queries,
               const CandidateSet& candidates, std::optional<double> current_loss) {
    const double current = current_loss ? *current_loss : enc.loss(passage, queries);
    std::vector<TokenSequence> swapped;
    swapped.reserve(candidates.size());
    for (const auto& c : candidates) {
        if (c.position >= passage.size()) {
            throw InvalidArgument("candidate position " + std::to_string(c.position) + " out of range");
        }
        TokenSequence s = passage;
        s[c.position] = c.token;
        swapped.push_back(std::move(s));
    }
    const std::vector<double> losses = enc.losses(swapped, queries);

    BestCandidate out;
    out.loss = current;
    out.evaluated = candidates.size();
    std::optional<std::size_t> arg;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        // (loss, position, token) total order; candidates are already sorted by
        // (position, token) but the comparison does not rely on it.
        if (!arg || losses[i] < losses[*arg] || (losses[i] == losses[*arg] && candidates[i] < candidates[*arg])) {
            arg = i;
        }
    }
    if (arg && losses[*arg] < current) {
        out.best = candidates[*arg];
        out.loss = losses[*arg];
    }
    return out;
}

AttackResult
run_attack(const Encoder& enc, const QueryBundle& queries, const AttackConfig& config, TokenSequence initial,
           const ValidationSet* validation) {
    config.validate();
    if (initial.size() != config.m) {
        throw InvalidArgument("initial passage has " + std::to_string(initial.size()) + " tokens, expected m=" +
                              std::to_string(config.m));
    }
    const std::size_t vocab = enc.vocab_size();
    const EmbeddingTable* table = enc.embedding_table();
    if (config.strategy != Strategy::kRandom && table == nullptr) {
        throw InvalidArgument(std::string(to_string(config.strategy)) + " needs the encoder's token embedding table");
    }

    const auto start = std::chrono::steady_clock::now();
    auto rng = make_rng(config.seed, Stream::kPositions);
    std::uniform_int_distribution<std::size_t> position_dist(0, config.m - 1);
    const std::size_t k = config.per_position_k();

    AttackResult result;
    result.passage = std::move(initial);
    result.loss = enc.loss(result.passage, queries);

    // Scores depend only on the passage; rejection leaves it unchanged, so the
    // gradient is recomputed only after an accepted swap.
    std::optional<ScoreMatrix> scores;
    TokenRanking ranking;
    std::size_t depth = 0;

    auto refresh_scores = [&] {
        if (scores) {
            return;
        }
        scores = scores_from_gradient(*table, enc.loss_gradient(result.passage, queries).grad);
        ++result.trace.gradient_evaluations;
        if (config.strategy == Strategy::kAggd) {
            ranking = rank_tokens(*scores);
        }
    };

    for (std::size_t j = 0; j < config.iterations; ++j) {
        IterationRecord rec;
        rec.iteration = j;
        CandidateSet candidates;
        switch (config.strategy) {
            case Strategy::kAggd:
                refresh_scores();
                rec.depth = depth;
                candidates = build_aggd_candidates(ranking, k, depth);
                break;
            case Strategy::kHotFlip: {
                refresh_scores();
                candidates = build_hotflip_candidates(*scores, position_dist(rng), config.n);
                break;
            }
            case Strategy::kRandom:
                candidates = build_random_candidates(rng, position_dist(rng), config.n, vocab);
                break;
        }

        const BestCandidate best = best_candidate(enc, result.passage, queries, candidates, result.loss);
        rec.evaluated = best.evaluated;
        if (best.best) {
            result.passage[best.best->position] = best.best->token;
            result.loss = best.loss;
            rec.accepted = true;
            depth = 0;
            scores.reset();
        } else {
            ++depth;
        }
        rec.loss = result.loss;

        const bool exhausted = config.strategy == Strategy::kAggd && !rec.accepted && depth * k >= vocab;
        const bool last = exhausted || j + 1 == config.iterations;
        if (validation != nullptr && config.log_eval_every > 0 && (j % config.log_eval_every == 0 || last)) {
            Matrix adv = enc.encode_passage(result.passage).transpose();
            rec.retacc = retrieval_accuracy(*validation, adv);
        }
        if (config.record_wall_time) {
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
        result.trace.records.push_back(rec);
        if (exhausted) {
            result.trace.exhausted = true;
            break;
        }
    }
    return result;
}

}  // namespace aggd
