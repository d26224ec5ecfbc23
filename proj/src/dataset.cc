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

#include "aggd/dataset.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace aggd {

namespace {

template <typename Fn>
void
for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!record.is_object() || !record.contains("_id") || !record.contains("text")) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": record needs '_id' and 'text'");
        }
        // BEIR ids are strings, but some dumps emit them as numbers.
        const auto& raw_id = record["_id"];
        std::string id = raw_id.is_string() ? raw_id.get<std::string>() : raw_id.dump();
        fn(std::move(id), record, line_no);
    }
}

std::vector<std::string>
split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == '\t' || c == ' ' || c == '\r') {
            if (!current.empty()) {
                fields.push_back(std::move(current));
                current.clear();
            }
        } else {
            current += c;
        }
    }
    if (!current.empty()) {
        fields.push_back(std::move(current));
    }
    return fields;
}

}  // namespace

std::string_view
to_string(Split split) {
    switch (split) {
        case Split::kTrain:
            return "train";
        case Split::kDev:
            return "dev";
        case Split::kTest:
            return "test";
    }
    return "unknown";
}

Split
parse_split(std::string_view name) {
    if (name == "train") {
        return Split::kTrain;
    }
    if (name == "dev" || name == "validation") {
        return Split::kDev;
    }
    if (name == "test") {
        return Split::kTest;
    }
    throw InvalidArgument("unknown split '" + std::string(name) + "'");
}

std::string
Passage::full_text() const {
    if (title.empty()) {
        return text;
    }
    return title + " " + text;
}

std::vector<std::string>
Dataset::query_ids(Split split) const {
    std::set<std::string> ids;
    for (const auto& q : gold_pairs(split)) {
        ids.insert(q.query_id);
    }
    return {ids.begin(), ids.end()};
}

const std::set<Qrel>&
Dataset::gold_pairs(Split split) const {
    static const std::set<Qrel> kEmpty;
    auto it = qrels.find(split);
    return it == qrels.end() ? kEmpty : it->second;
}

Dataset
load_dataset(const std::filesystem::path& corpus_path, const std::filesystem::path& queries_path,
             const std::filesystem::path& qrels_path, Split split) {
    Dataset ds;
    for_each_json_line(corpus_path, [&](std::string id, const nlohmann::json& rec, std::size_t line_no) {
        Passage p;
        p.title = rec.value("title", std::string());
        p.text = rec["text"].get<std::string>();
        if (!ds.corpus.emplace(id, std::move(p)).second) {
            throw FormatError(corpus_path.string() + ":" + std::to_string(line_no) + ": duplicate passage id " + id);
        }
    });
    for_each_json_line(queries_path, [&](std::string id, const nlohmann::json& rec, std::size_t line_no) {
        if (!ds.queries.emplace(id, rec["text"].get<std::string>()).second) {
            throw FormatError(queries_path.string() + ":" + std::to_string(line_no) + ": duplicate query id " + id);
        }
    });
    add_qrels(ds, qrels_path, split);
    return ds;
}

void
add_qrels(Dataset& dataset, const std::filesystem::path& qrels_path, Split split) {
    std::ifstream in(qrels_path);
    if (!in) {
        throw FormatError("cannot open " + qrels_path.string());
    }
    auto& target = dataset.qrels[split];
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            continue;  // header
        }
        auto fields = split_fields(line);
        if (fields.empty()) {
            continue;
        }
        if (fields.size() != 3) {
            throw FormatError(qrels_path.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
        }
        int score = 0;
        const auto& s = fields[2];
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), score);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw FormatError(qrels_path.string() + ":" + std::to_string(line_no) + ": bad score '" + s + "'");
        }
        if (!dataset.queries.contains(fields[0])) {
            throw FormatError(qrels_path.string() + ":" + std::to_string(line_no) + ": unknown query id " +
                              fields[0]);
        }
        if (!dataset.corpus.contains(fields[1])) {
            throw FormatError(qrels_path.string() + ":" + std::to_string(line_no) + ": unknown passage id " +
                              fields[1]);
        }
        if (score <= 0) {
            continue;
        }
        target.insert(Qrel{fields[0], fields[1], score});
    }
}

}  // namespace aggd
