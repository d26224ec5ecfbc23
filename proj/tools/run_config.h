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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aggd/attack.h"
#include "aggd/dataset.h"
#include "aggd/encoder.h"

namespace aggd::cli {

// Bad configuration. The message starts with the offending field path.
class ConfigError : public Error {
 public:
    ConfigError(const std::string& field, const std::string& message) : Error(field + ": " + message) {}
};

struct DataPaths {
    std::filesystem::path vocab;
    std::filesystem::path corpus;
    std::filesystem::path queries;
    std::map<Split, std::filesystem::path> qrels;
};

struct EncoderSpec {
    EncoderKind kind = EncoderKind::kTanhProjection;
    std::size_t dim = 64;
    std::size_t dim_out = 64;
    std::uint64_t seed = 0;
    std::filesystem::path table;  // optional input table, embedding-cache format
    std::string bridge_command;
    std::string bridge_address;
    std::uint64_t bridge_timeout_ms = 30'000;
};

struct EvalSpec {
    std::vector<std::size_t> k_r{1000};
    Split attack_split = Split::kTrain;
    Split validation_split = Split::kDev;
    Split test_split = Split::kTest;
    std::filesystem::path corpus_cache;  // optional precomputed corpus embeddings
};

struct RunConfig {
    DataPaths data;
    EncoderSpec encoder;
    AttackConfig attack;
    EvalSpec eval;
    std::size_t clusters = 1;
    std::size_t kmeans_iters = 100;
    std::size_t trials = 100;
    std::filesystem::path output = "aggd-out";

    nlohmann::json to_json() const;
};

// Points every data path at the layout written by `synth`: vocab.txt,
// corpus.jsonl, queries.jsonl and qrels/<split>.tsv (splits that exist).
void set_data_dir(DataPaths& data, const std::filesystem::path& dir);

// Parses a config object. Relative paths resolve against `base`. A manifest
// written by `attack` is accepted too; its "config" member is used.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base);
RunConfig load_config(const std::filesystem::path& path);

// Checks everything that can be checked without loading data. Returns warnings.
std::vector<std::string> validate(const RunConfig& config, bool needs_validation_split, bool needs_test_split);

}  // namespace aggd::cli
