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

#include "aggd/oracle.h"

namespace aggd {

Optimum
brute_force_optimum(const Encoder& enc, const QueryBundle& queries, std::size_t m) {
    const std::size_t vocab = enc.vocab_size();
    if (m == 0 || vocab == 0) {
        throw InvalidArgument("brute force needs m >= 1 and a non-empty vocabulary");
    }
    std::uint64_t space = 1;
    for (std::size_t i = 0; i < m; ++i) {
        space *= vocab;
        if (space > kOracleEvaluationLimit) {
            throw InvalidArgument("search space |V|^m exceeds the enumeration guard of 1e7");
        }
    }

    // Odometer over sequences in lexicographic order, so keeping only strict
    // improvements leaves the smallest sequence among ties.
    TokenSequence seq(m, 0);
    Optimum best{seq, enc.loss(seq, queries)};
    for (std::uint64_t step = 1; step < space; ++step) {
        for (std::size_t pos = m; pos-- > 0;) {
            if (static_cast<std::size_t>(++seq[pos]) < vocab) {
                break;
            }
            seq[pos] = 0;
        }
        const double l = enc.loss(seq, queries);
        if (l < best.loss) {
            best = {seq, l};
        }
    }
    return best;
}

SwapOptimum
brute_force_best_swap(const Encoder& enc, const QueryBundle& queries, const TokenSequence& passage) {
    const std::size_t vocab = enc.vocab_size();
    if (static_cast<std::uint64_t>(passage.size()) * vocab > kOracleEvaluationLimit) {
        throw InvalidArgument("m*|V| exceeds the enumeration guard of 1e7");
    }
    const double current = enc.loss(passage, queries);
    SwapOptimum out{std::nullopt, current};
    TokenSequence seq = passage;
    for (std::size_t pos = 0; pos < passage.size(); ++pos) {
        for (std::size_t v = 0; v < vocab; ++v) {
            seq[pos] = static_cast<TokenId>(v);
            const double l = enc.loss(seq, queries);
            // Visiting in (position, token) order, strict < keeps the first minimizer.
            if (l < out.loss) {
                out = {Candidate{pos, static_cast<TokenId>(v)}, l};
            }
        }
        seq[pos] = passage[pos];
    }
    return out;
}

}  // namespace aggd
