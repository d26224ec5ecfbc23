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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "aggd/attack.h"
#include "aggd/encoder.h"
#include "aggd/retrieval.h"

namespace aggd {

inline constexpr std::array<Strategy, 3> kAllStrategies = {Strategy::kAggd, Strategy::kHotFlip, Strategy::kRandom};

struct QualityConfig {
    std::size_t trials = 100;
    std::size_t m = 30;
    std::size_t n = 150;
    std::uint64_t seed = 0;
};

struct StrategyQuality {
    double mean_success = 0.0;  // mean over trials of the per-set mean validation success rate
    double mean_loss = 0.0;     // same averaging, training loss
    std::size_t best_count = 0; // trials whose set held the overall best candidate

    double best_fraction(std::size_t trials) const {
        return trials == 0 ? 0.0 : static_cast<double>(best_count) / static_cast<double>(trials);
    }
};

struct TrialRecord {
    std::size_t trial = 0;
    Strategy strategy = Strategy::kAggd;
    std::size_t set_size = 0;
    double mean_success = 0.0;
    double best_success = 0.0;
    bool contains_best = false;
};

struct QualityReport {
    std::size_t trials = 0;
    std::array<StrategyQuality, 3> strategies{};  // indexed like kAllStrategies
    std::vector<TrialRecord> records;

    const StrategyQuality& of(Strategy s) const { return strategies[static_cast<std::size_t>(s)]; }
    nlohmann::json to_json() const;
    // trial,strategy,set_size,mean_success,best_success,contains_best
    void write_csv(std::ostream& out) const;
};

// Per trial: a uniform random passage of length m, then the AGGD tier-0,
// HotFlip and random candidate sets of size <= n (HotFlip and random share one
// sampled position). Every candidate's validation success rate (1 - RetAcc of
// the swapped passage) is computed. The overall best candidate maximizes
// success rate, breaking ties by lower training loss; every set holding a
// candidate that ties on both is credited.
QualityReport candidate_quality_experiment(const Encoder& enc, const QueryBundle& queries,
                                           const ValidationSet& validation, const QualityConfig& config);

}  // namespace aggd
