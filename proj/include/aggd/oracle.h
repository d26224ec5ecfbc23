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
#include <optional>

#include "aggd/attack.h"
#include "aggd/encoder.h"

namespace aggd {

// Enumeration budget shared by both oracles.
inline constexpr std::uint64_t kOracleEvaluationLimit = 10'000'000;

struct Optimum {
    TokenSequence passage;
    double loss = 0.0;
};

// Exhaustive search over all |V|^m sequences; ties resolve to the
// lexicographically smallest sequence. Throws InvalidArgument past the limit.
Optimum brute_force_optimum(const Encoder& enc, const QueryBundle& queries, std::size_t m);

struct SwapOptimum {
    std::optional<Candidate> swap;  // none when no single swap strictly improves
    double loss = 0.0;              // loss after the swap, or the current loss
};

// All m*|V| single-token swaps of `passage`.
SwapOptimum brute_force_best_swap(const Encoder& enc, const QueryBundle& queries, const TokenSequence& passage);

}  // namespace aggd
