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
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "aggd/types.h"

namespace aggd {

enum class Split { kTrain, kDev, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct Passage {
    std::string title;
    std::string text;

    // Title and text joined by a space; the string that gets tokenized.
    std::string full_text() const;
};

struct Qrel {
    std::string query_id;
    std::string passage_id;
    int relevance = 1;

    auto operator<=>(const Qrel&) const = default;
};

// BEIR-layout dataset. Containers are ordered by id so every traversal is
// deterministic regardless of file order.
struct Dataset {
    std::map<std::string, Passage> corpus;
    std::map<std::string, std::string> queries;
    std::map<Split, std::set<Qrel>> qrels;

    // Distinct query ids that carry at least one qrel in `split`, sorted.
    std::vector<std::string> query_ids(Split split) const;
    const std::set<Qrel>& gold_pairs(Split split) const;
};

// Corpus/queries are JSON-lines files with `_id` and `text` (corpus also
// `title`); qrels is a TSV with one header line. Qrels are stored under
// `split`; rows with score <= 0 are dropped. Throws FormatError naming the
// offending line or id.
Dataset load_dataset(const std::filesystem::path& corpus_path, const std::filesystem::path& queries_path,
                     const std::filesystem::path& qrels_path, Split split = Split::kTest);

// Adds another qrels file (e.g. the dev split) to an already loaded dataset.
void add_qrels(Dataset& dataset, const std::filesystem::path& qrels_path, Split split);

}  // namespace aggd
