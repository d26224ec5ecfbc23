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

#include "run_config.h"

#include <cstdlib>
#include <fstream>
#include <set>

namespace aggd::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string
join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void
reject_unknown_keys(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(join(where, key), "unknown field");
        }
    }
}

const json&
object_at(const json& parent, const std::string& where, const char* key) {
    static const json empty = json::object();
    if (!parent.contains(key)) {
        return empty;
    }
    const json& v = parent[key];
    if (!v.is_object()) {
        throw ConfigError(join(where, key), "expected an object");
    }
    return v;
}

template <typename T>
void
read(const json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.contains(key)) {
        return;
    }
    const json& v = obj[key];
    if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) {
            throw ConfigError(join(where, key), "expected a string");
        }
    } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) {
            throw ConfigError(join(where, key), "expected a non-negative integer");
        }
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) {
            throw ConfigError(join(where, key), "expected an integer");
        }
    }
    out = v.get<T>();
}

void
read_path(const json& obj, const std::string& where, const char* key, const fs::path& base, fs::path& out) {
    std::string s;
    read(obj, where, key, s);
    if (!s.empty()) {
        out = fs::path(s).is_absolute() ? fs::path(s) : (base / s).lexically_normal();
    }
}

template <typename Enum, typename Parse>
void
read_enum(const json& obj, const std::string& where, const char* key, Enum& out, Parse parse) {
    std::string s;
    read(obj, where, key, s);
    if (s.empty()) {
        return;
    }
    try {
        out = parse(s);
    } catch (const InvalidArgument& e) {
        throw ConfigError(join(where, key), e.what());
    }
}

void
require_file(const fs::path& path, const std::string& field) {
    if (path.empty()) {
        throw ConfigError(field, "path is required");
    }
    if (!fs::exists(path)) {
        throw ConfigError(field, "path does not exist: " + path.string());
    }
}

}  // namespace

void
set_data_dir(DataPaths& data, const std::filesystem::path& dir) {
    data.vocab = dir / "vocab.txt";
    data.corpus = dir / "corpus.jsonl";
    data.queries = dir / "queries.jsonl";
    data.qrels.clear();
    for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
        const fs::path q = dir / "qrels" / (std::string(to_string(s)) + ".tsv");
        if (fs::exists(q)) {
            data.qrels[s] = q;
        }
    }
}

nlohmann::json
RunConfig::to_json() const {
    json qrels = json::object();
    for (const auto& [split, path] : data.qrels) {
        qrels[std::string(to_string(split))] = path.string();
    }
    json enc = {{"kind", std::string(to_string(encoder.kind))},
                {"dim", encoder.dim},
                {"dim_out", encoder.dim_out},
                {"seed", encoder.seed}};
    if (!encoder.table.empty()) {
        enc["table"] = encoder.table.string();
    }
    if (encoder.kind == EncoderKind::kRemote) {
        enc["bridge_command"] = encoder.bridge_command;
        enc["bridge_address"] = encoder.bridge_address;
        enc["bridge_timeout_ms"] = encoder.bridge_timeout_ms;
    }
    json ev = {{"k_r", eval.k_r},
               {"attack_split", std::string(to_string(eval.attack_split))},
               {"validation_split", std::string(to_string(eval.validation_split))},
               {"test_split", std::string(to_string(eval.test_split))}};
    if (!eval.corpus_cache.empty()) {
        ev["corpus_cache"] = eval.corpus_cache.string();
    }
    return {
        {"data",
         {{"vocab", data.vocab.string()},
          {"corpus", data.corpus.string()},
          {"queries", data.queries.string()},
          {"qrels", qrels}}},
        {"encoder", enc},
        {"attack",
         {{"strategy", std::string(to_string(attack.strategy))},
          {"m", attack.m},
          {"n", attack.n},
          {"iterations", attack.iterations},
          {"seed", attack.seed},
          {"init", std::string(to_string(attack.init))},
          {"fixed_token", attack.fixed_token},
          {"log_eval_every", attack.log_eval_every},
          {"record_wall_time", attack.record_wall_time}}},
        {"eval", ev},
        {"clusters", clusters},
        {"kmeans_iters", kmeans_iters},
        {"trials", trials},
        {"output", output.string()},
    };
}

RunConfig
parse_config(const nlohmann::json& input, const std::filesystem::path& base) {
    if (!input.is_object()) {
        throw ConfigError("<root>", "config must be a JSON object");
    }
    // A run manifest carries its config under "config".
    const json& j = input.contains("config") && input.contains("format_versions") ? input["config"] : input;
    reject_unknown_keys(j, "", {"data", "encoder", "attack", "eval", "clusters", "kmeans_iters", "trials", "output"});
    RunConfig c;

    const json& data = object_at(j, "", "data");
    reject_unknown_keys(data, "data", {"dir", "vocab", "corpus", "queries", "qrels"});
    fs::path dir;
    read_path(data, "data", "dir", base, dir);
    if (!dir.empty()) {
        set_data_dir(c.data, dir);
    }
    read_path(data, "data", "vocab", base, c.data.vocab);
    read_path(data, "data", "corpus", base, c.data.corpus);
    read_path(data, "data", "queries", base, c.data.queries);
    const json& qrels = object_at(data, "data", "qrels");
    for (const auto& [name, _] : qrels.items()) {
        Split s;
        try {
            s = parse_split(name);
        } catch (const InvalidArgument& e) {
            throw ConfigError("data.qrels." + name, e.what());
        }
        read_path(qrels, "data.qrels", name.c_str(), base, c.data.qrels[s]);
    }

    const json& enc = object_at(j, "", "encoder");
    reject_unknown_keys(enc, "encoder",
                        {"kind", "dim", "dim_out", "seed", "table", "bridge_command", "bridge_address",
                         "bridge_timeout_ms"});
    read_enum(enc, "encoder", "kind", c.encoder.kind, parse_encoder_kind);
    read(enc, "encoder", "dim", c.encoder.dim);
    c.encoder.dim_out = c.encoder.dim;
    read(enc, "encoder", "dim_out", c.encoder.dim_out);
    read(enc, "encoder", "seed", c.encoder.seed);
    read_path(enc, "encoder", "table", base, c.encoder.table);
    read(enc, "encoder", "bridge_command", c.encoder.bridge_command);
    read(enc, "encoder", "bridge_address", c.encoder.bridge_address);
    read(enc, "encoder", "bridge_timeout_ms", c.encoder.bridge_timeout_ms);

    const json& atk = object_at(j, "", "attack");
    reject_unknown_keys(atk, "attack",
                        {"strategy", "m", "n", "iterations", "seed", "init", "fixed_token", "log_eval_every",
                         "record_wall_time"});
    read_enum(atk, "attack", "strategy", c.attack.strategy, parse_strategy);
    read(atk, "attack", "m", c.attack.m);
    read(atk, "attack", "n", c.attack.n);
    read(atk, "attack", "iterations", c.attack.iterations);
    read(atk, "attack", "seed", c.attack.seed);
    read_enum(atk, "attack", "init", c.attack.init, parse_init_mode);
    read(atk, "attack", "fixed_token", c.attack.fixed_token);
    read(atk, "attack", "log_eval_every", c.attack.log_eval_every);
    if (atk.contains("record_wall_time")) {
        if (!atk["record_wall_time"].is_boolean()) {
            throw ConfigError("attack.record_wall_time", "expected a boolean");
        }
        c.attack.record_wall_time = atk["record_wall_time"].get<bool>();
    }

    const json& ev = object_at(j, "", "eval");
    reject_unknown_keys(ev, "eval", {"k_r", "attack_split", "validation_split", "test_split", "corpus_cache"});
    if (ev.contains("k_r")) {
        const json& ks = ev["k_r"];
        if (!ks.is_array()) {
            throw ConfigError("eval.k_r", "expected an array of positive integers");
        }
        c.eval.k_r.clear();
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (!ks[i].is_number_unsigned()) {
                throw ConfigError("eval.k_r[" + std::to_string(i) + "]", "expected a positive integer");
            }
            c.eval.k_r.push_back(ks[i].get<std::size_t>());
        }
    }
    read_enum(ev, "eval", "attack_split", c.eval.attack_split, parse_split);
    read_enum(ev, "eval", "validation_split", c.eval.validation_split, parse_split);
    read_enum(ev, "eval", "test_split", c.eval.test_split, parse_split);
    read_path(ev, "eval", "corpus_cache", base, c.eval.corpus_cache);

    read(j, "", "clusters", c.clusters);
    read(j, "", "kmeans_iters", c.kmeans_iters);
    read(j, "", "trials", c.trials);
    read_path(j, "", "output", base, c.output);
    return c;
}

RunConfig
load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("--config", "cannot open " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("--config", std::string("not valid JSON: ") + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

std::vector<std::string>
validate(const RunConfig& c, bool needs_validation_split, bool needs_test_split) {
    require_file(c.data.vocab, "data.vocab");
    require_file(c.data.corpus, "data.corpus");
    require_file(c.data.queries, "data.queries");
    auto require_split = [&](Split s) {
        const std::string field = "data.qrels." + std::string(to_string(s));
        const auto it = c.data.qrels.find(s);
        require_file(it == c.data.qrels.end() ? fs::path() : it->second, field);
    };
    require_split(c.eval.attack_split);
    if (needs_validation_split || c.attack.log_eval_every > 0) {
        require_split(c.eval.validation_split);
    }
    if (needs_test_split) {
        require_split(c.eval.test_split);
    }

    if (c.encoder.kind == EncoderKind::kRemote) {
        if (c.encoder.bridge_command.empty() && c.encoder.bridge_address.empty() && !std::getenv("AGGD_BRIDGE_CMD")) {
            throw ConfigError("encoder.bridge_command",
                              "a remote encoder needs bridge_command, bridge_address or AGGD_BRIDGE_CMD");
        }
        if (!c.encoder.bridge_command.empty() && !c.encoder.bridge_address.empty()) {
            throw ConfigError("encoder.bridge_address", "set either bridge_command or bridge_address, not both");
        }
    } else {
        if (c.encoder.table.empty() && c.encoder.dim < 1) {
            throw ConfigError("encoder.dim", "must be at least 1");
        }
        if (c.encoder.kind == EncoderKind::kTanhProjection && c.encoder.dim_out < 1) {
            throw ConfigError("encoder.dim_out", "must be at least 1");
        }
        if (c.encoder.kind == EncoderKind::kTanhProjection && !c.encoder.table.empty()) {
            throw ConfigError("encoder.table", "only the mean-pool and remote encoders take a table file");
        }
    }
    if (!c.encoder.table.empty()) {
        require_file(c.encoder.table, "encoder.table");
    }
    if (!c.eval.corpus_cache.empty()) {
        require_file(c.eval.corpus_cache, "eval.corpus_cache");
    }
    if (c.eval.k_r.empty()) {
        throw ConfigError("eval.k_r", "needs at least one value");
    }
    for (std::size_t k : c.eval.k_r) {
        if (k < 1) {
            throw ConfigError("eval.k_r", "values must be at least 1");
        }
    }
    if (c.clusters < 1) {
        throw ConfigError("clusters", "must be at least 1");
    }
    if (c.kmeans_iters < 1) {
        throw ConfigError("kmeans_iters", "must be at least 1");
    }
    try {
        return c.attack.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError("attack", e.what());
    }
}

}  // namespace aggd::cli
