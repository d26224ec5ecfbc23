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
#include <filesystem>

#include "aggd/dataset.h"
#include "aggd/vocabulary.h"

namespace aggd {

// Topic-structured toy retrieval corpus. Each passage draws most of its
// tokens from one topic's token pool; each query samples tokens from its gold
// passage, so the gold passage is a strong but beatable match.
struct SyntheticConfig {
    std::size_t vocab_size = 2000;
    std::size_t topics = 20;
    std::size_t tokens_per_topic = 50;
    std::size_t corpus_size = 2000;
    std::size_t passage_length = 24;
    std::size_t query_length = 6;
    std::size_t train_queries = 200;
    std::size_t dev_queries = 100;
    std::size_t test_queries = 100;
    double topic_probability = 0.8;  // chance a passage token comes from its topic pool
    double query_noise = 0.2;        // chance a query token is uniform over the vocabulary
    std::uint64_t seed = 0;
};

struct SyntheticData {
    Vocabulary vocab;
    Dataset dataset;
};

SyntheticData make_synthetic(const SyntheticConfig& config);

// Writes vocab.txt, corpus.jsonl, queries.jsonl and qrels/{train,dev,test}.tsv.
void write_beir(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace aggd
