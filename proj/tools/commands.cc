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

#include "commands.h"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "aggd/bridge.h"
#include "aggd/embedding_cache.h"
#include "aggd/kmeans.h"
#include "aggd/oracle.h"
#include "aggd/quality.h"
#include "aggd/retrieval.h"

#ifndef AGGD_VERSION
#define AGGD_VERSION "0.0.0"
#endif

namespace aggd::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kManifestFormat = 1;
constexpr int kPassageFormat = 1;
constexpr int kTraceFormat = 1;

// Shortest text that reads back to the same double.
std::string
fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void
note(const std::string& msg) {
    std::cerr << msg << '\n';
}

void
warn_all(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) {
        note("warning: " + w);
    }
}

void
write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

json
read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// Refuses to reuse a non-empty output directory unless forced; with --force
// only the artifacts named in `ours` are removed.
void
prepare_output(const fs::path& dir, bool force, std::initializer_list<const char*> ours) {
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw ConfigError("output", dir.string() + " exists and is not a directory");
    }
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) {
            throw ConfigError("output", dir.string() + " already exists; pass --force to overwrite");
        }
        for (const char* name : ours) {
            fs::remove_all(dir / name);
        }
    }
    fs::create_directories(dir);
}

json
versions() {
    return {
        {"aggd", AGGD_VERSION},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"cli11", CLI11_VERSION},
        {"compiler", __VERSION__},
    };
}

// Loaded data plus the encoder built from the config.
struct Workspace {
    const RunConfig& config;
    Vocabulary vocab;
    Dataset dataset;
    std::shared_ptr<BridgeSession> session;
    std::unique_ptr<Encoder> encoder;

    const RemoteEncoder* remote() const { return dynamic_cast<const RemoteEncoder*>(encoder.get()); }
};

EmbeddingTable
load_table(const fs::path& path, const Vocabulary& vocab) {
    const EmbeddingCache cache = read_embedding_cache(path);
    if (cache.ids != vocab.tokens()) {
        throw FormatError("table " + path.string() + " rows must be labelled with the vocabulary tokens in order");
    }
    EmbeddingTable t;
    t.matrix = cache.vectors.cast<double>();
    return t;
}

std::unique_ptr<Encoder>
build_encoder(const RunConfig& c, const Vocabulary& vocab, std::shared_ptr<BridgeSession>& session) {
    const EncoderSpec& e = c.encoder;
    switch (e.kind) {
        case EncoderKind::kMeanPool:
            return std::make_unique<MeanPoolEncoder>(e.table.empty()
                                                         ? EmbeddingTable::random(vocab.size(), e.dim, e.seed)
                                                         : load_table(e.table, vocab));
        case EncoderKind::kTanhProjection:
            return std::make_unique<TanhProjectionEncoder>(
                TanhProjectionEncoder::random(vocab.size(), e.dim, e.dim_out, e.seed));
        case EncoderKind::kRemote: {
            std::unique_ptr<Transport> transport;
            if (!e.bridge_address.empty()) {
                transport = TcpTransport::from_address(e.bridge_address);
            } else {
                const char* env = std::getenv("AGGD_BRIDGE_CMD");
                transport = ChildProcessTransport::from_shell_command(e.bridge_command.empty() ? env
                                                                                              : e.bridge_command);
            }
            session = std::make_shared<BridgeSession>(std::move(transport),
                                                      std::chrono::milliseconds(e.bridge_timeout_ms));
            std::optional<EmbeddingTable> mirror;
            if (!e.table.empty()) {
                mirror = load_table(e.table, vocab);
            }
            auto enc = std::make_unique<RemoteEncoder>(session, std::move(mirror));
            if (enc->vocab_size() != vocab.size()) {
                throw Error("bridge vocabulary has " + std::to_string(enc->vocab_size()) +
                            " tokens but data.vocab has " + std::to_string(vocab.size()));
            }
            return enc;
        }
    }
    throw InvalidArgument("unknown encoder kind");
}

std::unique_ptr<Workspace>
open_workspace(const RunConfig& c) {
    auto ws = std::make_unique<Workspace>(Workspace{c, load_vocabulary(c.data.vocab), {}, nullptr, nullptr});
    const Split primary = c.eval.attack_split;
    ws->dataset = load_dataset(c.data.corpus, c.data.queries, c.data.qrels.at(primary), primary);
    for (const auto& [split, path] : c.data.qrels) {
        if (split != primary) {
            add_qrels(ws->dataset, path, split);
        }
    }
    ws->encoder = build_encoder(c, ws->vocab, ws->session);
    return ws;
}

std::vector<TokenSequence>
tokenize_queries(const Workspace& ws, const std::vector<std::string>& qids) {
    std::vector<TokenSequence> out;
    out.reserve(qids.size());
    for (const auto& id : qids) {
        out.push_back(tokenize(ws.dataset.queries.at(id), ws.vocab));
    }
    return out;
}

std::vector<std::string>
query_texts(const Workspace& ws, const std::vector<std::string>& qids) {
    std::vector<std::string> out;
    for (const auto& id : qids) {
        out.push_back(ws.dataset.queries.at(id));
    }
    return out;
}

QueryBundle
bundle_for(const Workspace& ws, const std::vector<std::string>& qids) {
    if (qids.empty()) {
        throw Error("no queries to attack");
    }
    const auto tokens = tokenize_queries(ws, qids);
    if (const auto* remote = ws.remote()) {
        return remote->register_queries(query_texts(ws, qids), tokens);
    }
    return encode_queries(*ws.encoder, tokens);
}

std::vector<std::string>
split_queries(const Workspace& ws, Split split) {
    auto ids = ws.dataset.query_ids(split);
    if (ids.empty()) {
        throw Error("split '" + std::string(to_string(split)) + "' has no queries with qrels");
    }
    return ids;
}

ValidationSet
validation_set(const Workspace& ws) {
    std::vector<TokenSequence> queries;
    std::vector<TokenSequence> gold;
    for (const auto& q : ws.dataset.gold_pairs(ws.config.eval.validation_split)) {
        queries.push_back(tokenize(ws.dataset.queries.at(q.query_id), ws.vocab));
        gold.push_back(tokenize(ws.dataset.corpus.at(q.passage_id).full_text(), ws.vocab));
    }
    if (queries.empty()) {
        throw Error("validation split has no query-passage pairs");
    }
    return {ws.encoder->encode_passages(queries), ws.encoder->encode_passages(gold)};
}

std::vector<TokenSequence>
corpus_tokens(const Workspace& ws) {
    std::vector<TokenSequence> out;
    out.reserve(ws.dataset.corpus.size());
    for (const auto& [id, p] : ws.dataset.corpus) {
        out.push_back(tokenize(p.full_text(), ws.vocab));
    }
    return out;
}

EmbeddingCache
corpus_embeddings(const Workspace& ws) {
    if (!ws.config.eval.corpus_cache.empty()) {
        EmbeddingCache cache = read_embedding_cache(ws.config.eval.corpus_cache);
        if (cache.size() > 0 && cache.dim() != ws.encoder->dim()) {
            throw Error("corpus cache has dim " + std::to_string(cache.dim()) + " but the encoder has dim " +
                        std::to_string(ws.encoder->dim()));
        }
        return cache;
    }
    EmbeddingCache cache;
    for (const auto& [id, _] : ws.dataset.corpus) {
        cache.ids.push_back(id);
    }
    const auto tokens = corpus_tokens(ws);
    cache.vectors = ws.encoder->encode_passages(tokens).cast<float>();
    return cache;
}

TokenSequence
initial_passage(const Workspace& ws, const AttackConfig& cfg) {
    if (cfg.init == InitMode::kCorpusSample) {
        const auto corpus = corpus_tokens(ws);
        return init_passage(cfg, ws.vocab, corpus);
    }
    return init_passage(cfg, ws.vocab);
}

std::string
trace_csv(const AttackTrace& trace) {
    std::ostringstream out;
    trace.write_csv(out);
    return out.str();
}

std::string
cluster_name(const char* stem, std::size_t c, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.%s", stem, c, ext);
    return buf;
}

// Token ids of every passage named by `inputs`.
std::vector<TokenSequence>
read_passages(const std::vector<fs::path>& inputs, const Vocabulary& vocab) {
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            const json manifest = read_json_file(in / "manifest.json");
            for (const auto& p : manifest.at("passages")) {
                files.push_back(in / p.at("passage").get<std::string>());
            }
        } else {
            files.push_back(in);
        }
    }
    std::vector<TokenSequence> out;
    for (const auto& f : files) {
        const json j = read_json_file(f);
        if (!j.contains("token_ids") || !j["token_ids"].is_array()) {
            throw FormatError(f.string() + ": missing token_ids");
        }
        TokenSequence seq = j["token_ids"].get<TokenSequence>();
        if (seq.empty()) {
            throw FormatError(f.string() + ": empty passage");
        }
        for (TokenId t : seq) {
            if (!vocab.contains(t)) {
                throw FormatError(f.string() + ": token id " + std::to_string(t) + " is outside the vocabulary");
            }
        }
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace

void
cmd_attack(const RunConfig& config, bool force) {
    warn_all(validate(config, false, false));
    if (fs::exists(config.output) && !fs::is_empty(config.output) && !force) {
        throw ConfigError("output", config.output.string() + " already exists; pass --force to overwrite");
    }
    auto ws = open_workspace(config);
    const auto qids = split_queries(*ws, config.eval.attack_split);
    if (config.clusters > qids.size()) {
        throw ConfigError("clusters", std::to_string(config.clusters) + " clusters but only " +
                                          std::to_string(qids.size()) + " attack queries");
    }
    std::optional<ValidationSet> val;
    if (config.attack.log_eval_every > 0) {
        val = validation_set(*ws);
    }

    const QueryBundle all = bundle_for(*ws, qids);
    std::vector<std::vector<std::size_t>> groups;
    if (config.clusters == 1) {
        groups.emplace_back(qids.size());
        std::iota(groups[0].begin(), groups[0].end(), 0);
    } else {
        const Clustering cl = kmeans(all.vectors, config.clusters, config.kmeans_iters, config.attack.seed);
        for (std::size_t c = 0; c < config.clusters; ++c) {
            groups.push_back(cl.members(c));
        }
        note("k-means: " + std::to_string(cl.iterations) + " iterations, inertia " + fmt_double(cl.inertia));
    }

    prepare_output(config.output, force, {"manifest.json", "passages", "traces"});
    json entries = json::array();
    for (std::size_t c = 0; c < groups.size(); ++c) {
        QueryBundle bundle;
        if (groups.size() == 1) {
            bundle = all;
        } else if (ws->remote()) {
            std::vector<std::string> sub;
            for (std::size_t i : groups[c]) {
                sub.push_back(qids[i]);
            }
            bundle = bundle_for(*ws, sub);
        } else {
            Matrix rows(static_cast<Eigen::Index>(groups[c].size()), all.vectors.cols());
            for (std::size_t r = 0; r < groups[c].size(); ++r) {
                rows.row(static_cast<Eigen::Index>(r)) = all.vectors.row(static_cast<Eigen::Index>(groups[c][r]));
            }
            bundle = make_query_bundle(std::move(rows));
        }
        AttackConfig cfg = config.attack;
        cfg.seed = config.attack.seed + c;
        const AttackResult r =
            run_attack(*ws->encoder, bundle, cfg, initial_passage(*ws, cfg), val ? &*val : nullptr);

        const std::string passage_rel = "passages/" + cluster_name("passage", c, "json");
        const std::string trace_rel = "traces/" + cluster_name("trace", c, "csv");
        const json passage = {
            {"format_version", kPassageFormat},
            {"cluster", c},
            {"seed", cfg.seed},
            {"queries", groups[c].size()},
            {"token_ids", r.passage},
            {"text", detokenize(r.passage, ws->vocab)},
            {"loss", r.loss},
            {"iterations", r.trace.records.size()},
            {"exhausted", r.trace.exhausted},
            {"gradient_evaluations", r.trace.gradient_evaluations},
        };
        write_text(config.output / passage_rel, passage.dump(2) + "\n");
        write_text(config.output / trace_rel, trace_csv(r.trace));
        entries.push_back({{"cluster", c},
                           {"seed", cfg.seed},
                           {"queries", groups[c].size()},
                           {"loss", r.loss},
                           {"passage", passage_rel},
                           {"trace", trace_rel}});
        note("passage " + std::to_string(c + 1) + "/" + std::to_string(groups.size()) + ": " +
             std::to_string(groups[c].size()) + " queries, loss " + fmt_double(r.loss) + " after " +
             std::to_string(r.trace.records.size()) + " iterations" + (r.trace.exhausted ? " (exhausted)" : ""));
    }

    json manifest = {
        {"format_versions",
         {{"manifest", kManifestFormat},
          {"passage_json", kPassageFormat},
          {"trace_csv", kTraceFormat},
          {"embedding_cache", std::string(kEmbeddingCacheMagic, sizeof(kEmbeddingCacheMagic))}}},
        {"command", "attack"},
        {"versions", versions()},
        {"config", config.to_json()},
        {"seed", config.attack.seed},
        {"passages", entries},
    };
    if (ws->session) {
        const auto& info = ws->session->handshake_info();
        manifest["bridge"] = {{"version", info.version}, {"dim", info.dim}, {"vocab_size", info.vocab_size}};
    }
    write_text(config.output / "manifest.json", manifest.dump(2) + "\n");
    std::cout << (config.output / "manifest.json").string() << '\n';
}

void
cmd_evaluate(const RunConfig& config, const std::vector<fs::path>& inputs, const fs::path& report_path,
             const fs::path& write_cache) {
    warn_all(validate(config, true, true));
    for (const auto& in : inputs) {
        if (!fs::exists(in)) {
            throw ConfigError("passages", "path does not exist: " + in.string());
        }
    }
    auto ws = open_workspace(config);
    const auto adversarial = read_passages(inputs, ws->vocab);
    const EmbeddingCache corpus = corpus_embeddings(*ws);
    if (!write_cache.empty()) {
        if (write_cache.has_parent_path()) {
            fs::create_directories(write_cache.parent_path());
        }
        write_embedding_cache(corpus, write_cache);
    }
    const RetrievalIndex index = build_index(corpus, adversarial, *ws->encoder);

    const auto test_ids = split_queries(*ws, config.eval.test_split);
    const Matrix test_vectors = ws->encoder->encode_passages(tokenize_queries(*ws, test_ids));
    EvalReport report = attack_success_rate(index, test_vectors, config.eval.k_r, test_ids);

    const ValidationSet val = validation_set(*ws);
    Matrix adv_vectors = ws->encoder->encode_passages(adversarial);
    if (adversarial.empty()) {
        adv_vectors.resize(0, static_cast<Eigen::Index>(ws->encoder->dim()));
    }
    report.retacc = retrieval_accuracy(val, adv_vectors);
    report.n_val = val.size();

    json j = report.to_json();
    j["passages"] = adversarial.size();
    j["corpus_size"] = corpus.size();
    const std::string text = j.dump(2) + "\n";
    if (!report_path.empty()) {
        write_text(report_path, text);
    }
    std::cout << text;
}

void
cmd_analyze_candidates(const RunConfig& config, bool force) {
    if (config.trials < 1) {
        throw ConfigError("trials", "must be at least 1");
    }
    warn_all(validate(config, true, false));
    if (fs::exists(config.output) && !fs::is_empty(config.output) && !force) {
        throw ConfigError("output", config.output.string() + " already exists; pass --force to overwrite");
    }
    auto ws = open_workspace(config);
    const QueryBundle queries = bundle_for(*ws, split_queries(*ws, config.eval.attack_split));
    const ValidationSet val = validation_set(*ws);
    QualityConfig qc;
    qc.trials = config.trials;
    qc.m = config.attack.m;
    qc.n = config.attack.n;
    qc.seed = config.attack.seed;
    const QualityReport report = candidate_quality_experiment(*ws->encoder, queries, val, qc);

    prepare_output(config.output, force, {"quality.json", "quality.csv"});
    json j = report.to_json();
    j["config"] = config.to_json();
    write_text(config.output / "quality.json", j.dump(2) + "\n");
    std::ostringstream csv;
    report.write_csv(csv);
    write_text(config.output / "quality.csv", csv.str());
    std::cout << report.to_json().dump(2) << '\n';
}

void
cmd_sweep(const RunConfig& config, const std::string& axis, const std::vector<std::size_t>& values,
          std::size_t parallel, bool force) {
    if (axis != "n" && axis != "m") {
        throw ConfigError("--axis", "must be n or m, got '" + axis + "'");
    }
    if (values.empty()) {
        throw ConfigError("--values", "needs at least one value");
    }
    if (parallel < 1) {
        throw ConfigError("--parallel", "must be at least 1");
    }
    RunConfig base = config;
    if (base.attack.log_eval_every == 0) {
        base.attack.log_eval_every = std::max<std::size_t>(1, base.attack.iterations / 50);
    }
    std::vector<AttackConfig> points;
    for (std::size_t i = 0; i < values.size(); ++i) {
        AttackConfig cfg = base.attack;
        (axis == "n" ? cfg.n : cfg.m) = values[i];
        // Sequential points share the seed; concurrent ones each get their own.
        if (parallel > 1) {
            cfg.seed = base.attack.seed + i;
        }
        try {
            warn_all(cfg.validate());
        } catch (const InvalidArgument& e) {
            throw ConfigError("--values[" + std::to_string(i) + "]", e.what());
        }
        points.push_back(cfg);
    }
    base.attack = points.front();
    validate(base, true, true);
    if (base.clusters != 1) {
        note("warning: sweep attacks every query with one passage; clusters is ignored");
    }
    if (fs::exists(base.output) && !fs::is_empty(base.output) && !force) {
        throw ConfigError("output", base.output.string() + " already exists; pass --force to overwrite");
    }

    auto ws = open_workspace(base);
    const QueryBundle queries = bundle_for(*ws, split_queries(*ws, base.eval.attack_split));
    const ValidationSet val = validation_set(*ws);
    const EmbeddingCache corpus = corpus_embeddings(*ws);
    const auto test_ids = split_queries(*ws, base.eval.test_split);
    const Matrix test_vectors = ws->encoder->encode_passages(tokenize_queries(*ws, test_ids));
    std::vector<TokenSequence> inits;
    for (const auto& cfg : points) {
        inits.push_back(initial_passage(*ws, cfg));
    }

    std::vector<std::optional<AttackResult>> results(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            try {
                results[i] = run_attack(*ws->encoder, queries, points[i], inits[i], &val);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(parallel, points.size()); ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    prepare_output(base.output, force, {"sweep.csv", "sweep.json", "series"});
    std::ostringstream csv;
    csv << axis << ",final_loss";
    for (std::size_t k : base.eval.k_r) {
        csv << ",asr@" << k;
    }
    csv << ",success_series\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const AttackResult& r = *results[i];
        const TokenSequence adv[] = {r.passage};
        const RetrievalIndex index = build_index(corpus, adv, *ws->encoder);
        const EvalReport report = attack_success_rate(index, test_vectors, base.eval.k_r);

        const std::string series_rel = "series/" + axis + "_" + std::to_string(values[i]) + ".csv";
        std::ostringstream series;
        series << "iter,success_rate\n";
        for (const auto& rec : r.trace.records) {
            if (rec.retacc) {
                series << rec.iteration << ',' << fmt_double(1.0 - *rec.retacc) << '\n';
            }
        }
        write_text(base.output / series_rel, series.str());

        csv << values[i] << ',' << fmt_double(r.loss);
        for (std::size_t k : base.eval.k_r) {
            csv << ',' << fmt_double(report.asr.at(k));
        }
        csv << ',' << series_rel << '\n';
        note(axis + "=" + std::to_string(values[i]) + ": loss " + fmt_double(r.loss));
    }
    write_text(base.output / "sweep.csv", csv.str());
    const json meta = {{"command", "sweep"},
                       {"axis", axis},
                       {"values", values},
                       {"parallel", parallel},
                       {"versions", versions()},
                       {"config", base.to_json()}};
    write_text(base.output / "sweep.json", meta.dump(2) + "\n");
    std::cout << (base.output / "sweep.csv").string() << '\n';
}

void
cmd_oracle(const RunConfig& config) {
    warn_all(validate(config, false, false));
    auto ws = open_workspace(config);
    const QueryBundle queries = bundle_for(*ws, split_queries(*ws, config.eval.attack_split));
    const Optimum opt = brute_force_optimum(*ws->encoder, queries, config.attack.m);
    const json j = {{"token_ids", opt.passage}, {"text", detokenize(opt.passage, ws->vocab)}, {"loss", opt.loss}};
    std::cout << j.dump(2) << '\n';
}

void
cmd_synth(const SyntheticConfig& config, const fs::path& out, bool force) {
    prepare_output(out, force, {"vocab.txt", "corpus.jsonl", "queries.jsonl", "qrels"});
    write_beir(make_synthetic(config), out);
    std::cout << out.string() << '\n';
}

}  // namespace aggd::cli
