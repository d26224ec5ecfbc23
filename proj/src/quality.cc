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

#include "aggd/quality.h"

#include <cstdio>
#include <map>
#include <ostream>
#include <random>

namespace aggd {

namespace {

struct Score {
    double success = 0.0;
    double loss = 0.0;
};

// Higher success first, then lower loss.
bool
better(const Score& a, const Score& b) {
    if (a.success != b.success) {
        return a.success > b.success;
    }
    return a.loss < b.loss;
}

}  // namespace

nlohmann::json
QualityReport::to_json() const {
    nlohmann::json j;
    j["trials"] = trials;
    for (Strategy s : kAllStrategies) {
        const auto& q = of(s);
        j["strategies"][std::string(to_string(s))] = {
            {"mean_success", q.mean_success},
            {"mean_loss", q.mean_loss},
            {"best_count", q.best_count},
            {"best_fraction", q.best_fraction(trials)},
        };
    }
    return j;
}

void
QualityReport::write_csv(std::ostream& out) const {
    out << "trial,strategy,set_size,mean_success,best_success,contains_best\n";
    for (const auto& r : records) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", r.mean_success, r.best_success);
        out << r.trial << ',' << to_string(r.strategy) << ',' << r.set_size << ',' << buf << ','
            << (r.contains_best ? 1 : 0) << '\n';
    }
}

QualityReport
candidate_quality_experiment(const Encoder& enc, const QueryBundle& queries, const ValidationSet& validation,
                             const QualityConfig& config) {
    if (config.trials < 1) {
        throw InvalidArgument("candidate quality experiment needs trials >= 1");
    }
    if (config.m < 1 || config.n < config.m) {
        throw InvalidArgument("candidate quality experiment needs 1 <= m <= n");
    }
    const EmbeddingTable* table = enc.embedding_table();
    if (table == nullptr) {
        throw InvalidArgument("candidate quality experiment needs the encoder's token embedding table");
    }
    const std::size_t vocab = enc.vocab_size();
    const std::size_t k = config.n / config.m;

    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<TokenId> token_dist(0, static_cast<TokenId>(vocab) - 1);
    std::uniform_int_distribution<std::size_t> position_dist(0, config.m - 1);

    QualityReport report;
    report.trials = config.trials;
    std::array<double, 3> success_sum{};
    std::array<double, 3> loss_sum{};

    for (std::size_t trial = 0; trial < config.trials; ++trial) {
        TokenSequence passage(config.m);
        for (auto& t : passage) {
            t = token_dist(rng);
        }
        const ScoreMatrix scores = scores_from_gradient(*table, enc.loss_gradient(passage, queries).grad);
        const std::size_t position = position_dist(rng);
        const std::array<CandidateSet, 3> sets = {
            build_aggd_candidates(scores, k, 0),
            build_hotflip_candidates(scores, position, config.n),
            build_random_candidates(rng, position, config.n, vocab),
        };

        // Each distinct candidate is scored once even if several sets hold it.
        std::map<Candidate, Score> scored;
        for (const auto& set : sets) {
            for (const auto& c : set) {
                scored.emplace(c, Score{});
            }
        }
        std::vector<TokenSequence> swapped;
        swapped.reserve(scored.size());
        for (const auto& [c, _] : scored) {
            TokenSequence s = passage;
            s[c.position] = c.token;
            swapped.push_back(std::move(s));
        }
        const Matrix vectors = enc.encode_passages(swapped);
        std::size_t idx = 0;
        for (auto& [c, score] : scored) {
            const Matrix one = vectors.row(static_cast<Eigen::Index>(idx));
            score.success = 1.0 - retrieval_accuracy(validation, one);
            score.loss = -queries.mean.dot(vectors.row(static_cast<Eigen::Index>(idx)).transpose());
            ++idx;
        }
        Score best = scored.begin()->second;
        for (const auto& [c, score] : scored) {
            if (better(score, best)) {
                best = score;
            }
        }

        for (std::size_t s = 0; s < sets.size(); ++s) {
            TrialRecord rec;
            rec.trial = trial;
            rec.strategy = kAllStrategies[s];
            rec.set_size = sets[s].size();
            double success = 0.0;
            double loss = 0.0;
            Score set_best = scored.at(sets[s].front());
            for (const auto& c : sets[s]) {
                const Score& sc = scored.at(c);
                success += sc.success;
                loss += sc.loss;
                if (better(sc, set_best)) {
                    set_best = sc;
                }
            }
            rec.mean_success = success / static_cast<double>(sets[s].size());
            rec.best_success = set_best.success;
            rec.contains_best = !better(best, set_best);
            success_sum[s] += rec.mean_success;
            loss_sum[s] += loss / static_cast<double>(sets[s].size());
            if (rec.contains_best) {
                ++report.strategies[s].best_count;
            }
            report.records.push_back(rec);
        }
    }
    for (std::size_t s = 0; s < 3; ++s) {
        report.strategies[s].mean_success = success_sum[s] / static_cast<double>(config.trials);
        report.strategies[s].mean_loss = loss_sum[s] / static_cast<double>(config.trials);
    }
    return report;
}

}  // namespace aggd
