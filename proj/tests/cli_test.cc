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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "aggd/embedding_cache.h"
#include "test_support.h"

namespace {

namespace fs = std::filesystem;
using aggd::testing::read_file;
using aggd::testing::TempDir;
using aggd::testing::write_file;
using nlohmann::json;

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

// Runs the CLI through the shell; `env` is a prefix such as "FOO=bar".
CliRun
aggd_cli(const TempDir& dir, const std::string& args, const std::string& env = "") {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = env + " " + AGGD_CLI + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

std::size_t
count_files(const fs::path& dir) {
    if (!fs::exists(dir)) {
        return 0;
    }
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

std::size_t
count_lines(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Copy of tests/data/toy plus the mean-pool table it needs:
// x=(1,0) y=(0,1) big_x=(2,0) big_y=(0,2) adv=(1.9,0).
fs::path
toy_fixture(const TempDir& dir) {
    const fs::path toy = dir / "toy";
    fs::copy(fs::path(AGGD_TEST_DATA) / "toy", toy, fs::copy_options::recursive);
    aggd::EmbeddingCache table;
    table.ids = {"x", "y", "big_x", "big_y", "adv"};
    table.vectors.resize(5, 2);
    table.vectors << 1, 0, 0, 1, 2, 0, 0, 2, 1.9f, 0;
    aggd::write_embedding_cache(table, toy / "table.emb");
    return toy;
}

// Small synthetic dataset written by the CLI itself.
fs::path
synth_fixture(const TempDir& dir) {
    const std::string args = "synth -o " + (dir / "data").string() +
                             " --vocab-size 300 --corpus-size 120 --topics 6 --passage-length 12 --query-length 4"
                             " --train-queries 60 --dev-queries 30 --test-queries 30 --seed 5";
    const CliRun r = aggd_cli(dir, args);
    EXPECT_EQ(r.code, 0) << r.err;
    return dir / "data";
}

std::string
small_encoder(const fs::path& data) {
    return "--data-dir " + data.string() + " --encoder tanh-projection --dim 8 --dim-out 6 --encoder-seed 3";
}

std::string
small_attack(const fs::path& data) {
    return small_encoder(data) + " -m 4 -n 8 -N 30";
}

TEST(Evaluate, ToyFixtureMatchesHandExample) {
    TempDir dir;
    const fs::path toy = toy_fixture(dir);
    const CliRun r = aggd_cli(dir, "evaluate --config " + (toy / "config.json").string() + " " +
                                    (toy / "adv_passage.json").string() + " --report " +
                                    (dir / "report.json").string());
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["asr"]["1"], 0.0);
    EXPECT_EQ(j["asr"]["2"], 0.5);
    EXPECT_EQ(j["retacc"], 1.0);
    EXPECT_EQ(j["passages"], 1);
    EXPECT_EQ(json::parse(read_file(dir / "report.json")), j);
}

TEST(Evaluate, ZeroPassagesGiveZeroAsr) {
    TempDir dir;
    const fs::path toy = toy_fixture(dir);
    const CliRun r = aggd_cli(dir, "evaluate --config " + (toy / "config.json").string() + " --k-r 1,2,50");
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    for (const auto& [k, v] : j["asr"].items()) {
        EXPECT_EQ(v, 0.0) << "k_r " << k;
    }
    EXPECT_EQ(j["retacc"], 1.0);
}

TEST(Evaluate, DeepCutoffSaturatesOnlyWithAnAdversarialRow) {
    TempDir dir;
    const fs::path toy = toy_fixture(dir);
    const std::string base = "evaluate --config " + (toy / "config.json").string() + " --k-r 50 ";
    const CliRun with = aggd_cli(dir, base + (toy / "adv_passage.json").string());
    ASSERT_EQ(with.code, 0) << with.err;
    EXPECT_EQ(json::parse(with.out)["asr"]["50"], 1.0);
    const CliRun without = aggd_cli(dir, base);
    ASSERT_EQ(without.code, 0) << without.err;
    EXPECT_EQ(json::parse(without.out)["asr"]["50"], 0.0);
}

TEST(Evaluate, CorpusCacheRoundTripAndDimMismatch) {
    TempDir dir;
    const fs::path toy = toy_fixture(dir);
    const std::string cfg = "evaluate --config " + (toy / "config.json").string() + " ";
    const fs::path cache = dir / "corpus.emb";
    const CliRun first = aggd_cli(dir, cfg + "--write-corpus-cache " + cache.string() + " " +
                                        (toy / "adv_passage.json").string());
    ASSERT_EQ(first.code, 0) << first.err;
    const CliRun cached =
        aggd_cli(dir, cfg + "--corpus-cache " + cache.string() + " " + (toy / "adv_passage.json").string());
    ASSERT_EQ(cached.code, 0) << cached.err;
    EXPECT_EQ(json::parse(cached.out)["asr"], json::parse(first.out)["asr"]);

    aggd::EmbeddingCache wide;
    wide.ids = {"p1", "p2"};
    wide.vectors = aggd::MatrixF::Zero(2, 3);
    aggd::write_embedding_cache(wide, dir / "wide.emb");
    const CliRun bad = aggd_cli(dir, cfg + "--corpus-cache " + (dir / "wide.emb").string());
    EXPECT_EQ(bad.code, 3);
    EXPECT_NE(bad.err.find("dim"), std::string::npos) << bad.err;
}

TEST(Attack, SingleClusterWritesOnePassageAndTrace) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const fs::path out = dir / "run";
    const CliRun r = aggd_cli(dir, "attack " + small_attack(data) + " -o " + out.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_files(out / "passages"), 1u);
    EXPECT_EQ(count_files(out / "traces"), 1u);
    const json manifest = json::parse(read_file(out / "manifest.json"));
    EXPECT_EQ(manifest["config"]["attack"]["m"], 4);
    EXPECT_EQ(manifest["seed"], 0);
    EXPECT_TRUE(manifest["format_versions"].contains("trace_csv"));
    const json passage = json::parse(read_file(out / "passages" / "passage_000.json"));
    EXPECT_EQ(passage["token_ids"].size(), 4u);
    EXPECT_EQ(passage["queries"], 60);
    const std::string trace = read_file(out / "traces" / "trace_000.csv");
    EXPECT_EQ(trace.substr(0, trace.find('\n')), "iter,loss,accepted,depth,evaluated,wall_ms");
    EXPECT_EQ(count_lines(trace), 31u);
}

TEST(Attack, TenClustersGiveTenPassages) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const fs::path out = dir / "run";
    const CliRun r = aggd_cli(dir, "attack " + small_attack(data) + " --clusters 10 -o " + out.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_files(out / "passages"), 10u);
    EXPECT_EQ(count_files(out / "traces"), 10u);
    const json manifest = json::parse(read_file(out / "manifest.json"));
    ASSERT_EQ(manifest["passages"].size(), 10u);
    std::size_t queries = 0;
    for (const auto& p : manifest["passages"]) {
        queries += p["queries"].get<std::size_t>();
    }
    EXPECT_EQ(queries, 60u);

    // A run directory is a valid evaluate input.
    const CliRun ev = aggd_cli(dir, "evaluate " + small_encoder(data) + " --k-r 1,10 " + out.string());
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_EQ(json::parse(ev.out)["passages"], 10);
}

TEST(Attack, MissingVocabIsAConfigError) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "attack " + small_attack(data) + " --vocab " + (dir / "nope.txt").string() +
                                    " -o " + (dir / "run").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("data.vocab"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(Attack, BadConfigFieldsNamed) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    write_file(dir / "typo.json", R"({"attack": {"itertions": 5}})");
    CliRun r = aggd_cli(dir, "attack --config " + (dir / "typo.json").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("attack.itertions"), std::string::npos) << r.err;

    write_file(dir / "neg.json", R"({"attack": {"m": -1}})");
    r = aggd_cli(dir, "attack --config " + (dir / "neg.json").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("attack.m"), std::string::npos) << r.err;

    r = aggd_cli(dir, "attack " + small_attack(data) + " -n 2 -o " + (dir / "run").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("n >= m"), std::string::npos) << r.err;

    r = aggd_cli(dir, "attack " + small_attack(data) + " --strategy greedy");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--strategy"), std::string::npos) << r.err;
}

TEST(Attack, ExistingOutputNeedsForce) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const std::string args = "attack " + small_attack(data) + " -o " + (dir / "run").string();
    ASSERT_EQ(aggd_cli(dir, args).code, 0);
    write_file(dir / "run" / "notes.txt", "keep me");
    const CliRun again = aggd_cli(dir, args);
    EXPECT_EQ(again.code, 2);
    EXPECT_NE(again.err.find("--force"), std::string::npos) << again.err;
    const CliRun forced = aggd_cli(dir, args + " --force");
    EXPECT_EQ(forced.code, 0) << forced.err;
    EXPECT_EQ(read_file(dir / "run" / "notes.txt"), "keep me");
}

TEST(Attack, ReproducibleTraces) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    for (const char* strategy : {"aggd", "hotflip", "random"}) {
        const std::string args = "attack " + small_attack(data) + " --clusters 2 --seed 9 --strategy " + strategy;
        ASSERT_EQ(aggd_cli(dir, args + " -o " + (dir / "a").string() + " --force").code, 0);
        ASSERT_EQ(aggd_cli(dir, args + " -o " + (dir / "b").string() + " --force").code, 0);
        for (const char* file : {"traces/trace_000.csv", "traces/trace_001.csv", "passages/passage_001.json"}) {
            EXPECT_EQ(read_file(dir / "a" / file), read_file(dir / "b" / file)) << strategy << " " << file;
        }
        // The manifest alone is enough to rerun.
        const CliRun re = aggd_cli(dir, "attack --config " + (dir / "a" / "manifest.json").string() + " -o " +
                                         (dir / "c").string() + " --force");
        ASSERT_EQ(re.code, 0) << re.err;
        EXPECT_EQ(read_file(dir / "a" / "traces/trace_001.csv"), read_file(dir / "c" / "traces/trace_001.csv"));
    }
}

TEST(Attack, FlagsOverrideConfig) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    write_file(dir / "cfg.json", json{{"data", {{"dir", "data"}}},
                                      {"encoder", {{"kind", "mean-pool"}, {"dim", 5}}},
                                      {"attack", {{"m", 3}, {"n", 9}, {"iterations", 10}}},
                                      {"output", "from-config"}}
                                     .dump());
    CliRun r = aggd_cli(dir, "attack --config " + (dir / "cfg.json").string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(read_file(dir / "from-config/passages/passage_000.json"))["token_ids"].size(), 3u);

    r = aggd_cli(dir, "attack --config " + (dir / "cfg.json").string() + " -m 6 -n 12 --timing -o " +
                          (dir / "flags").string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(read_file(dir / "flags/passages/passage_000.json"))["token_ids"].size(), 6u);
    const json manifest = json::parse(read_file(dir / "flags/manifest.json"));
    EXPECT_EQ(manifest["config"]["attack"]["n"], 12);
    EXPECT_EQ(manifest["config"]["attack"]["iterations"], 10);
    EXPECT_EQ(manifest["config"]["attack"]["record_wall_time"], true);
}

TEST(Attack, ValidationLoggingAddsRetaccColumn) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "attack " + small_attack(data) + " --log-eval-every 10 -o " + (dir / "run").string());
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string trace = read_file(dir / "run/traces/trace_000.csv");
    EXPECT_EQ(trace.substr(0, trace.find('\n')), "iter,loss,accepted,depth,evaluated,wall_ms,retacc");
}

TEST(AnalyzeCandidates, ZeroTrialsRejected) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "analyze-candidates " + small_attack(data) + " --trials 0 -o " + (dir / "q").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("trials"), std::string::npos) << r.err;
}

TEST(AnalyzeCandidates, MeanPoolSingleTrial) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "analyze-candidates --data-dir " + data.string() +
                                    " --encoder mean-pool --dim 6 -m 4 -n 8 --trials 1 -o " + (dir / "q").string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["strategies"]["aggd"]["best_fraction"], 1.0);
}

TEST(AnalyzeCandidates, ReportAndCsv) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "analyze-candidates " + small_attack(data) + " --trials 12 -o " + (dir / "q").string());
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(read_file(dir / "q/quality.json"));
    double total = 0.0;
    for (const char* s : {"aggd", "hotflip", "random"}) {
        ASSERT_TRUE(j["strategies"].contains(s));
        total += j["strategies"][s]["best_fraction"].get<double>();
    }
    EXPECT_GE(total, 1.0);
    EXPECT_EQ(count_lines(read_file(dir / "q/quality.csv")), 1u + 3u * 12u);
}

TEST(Sweep, CandidateSizeGrid) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "sweep " + small_attack(data) + " --k-r 1,10 --axis n --values 30,60,90,150 -o " +
                                    (dir / "sw").string());
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = read_file(dir / "sw/sweep.csv");
    EXPECT_EQ(count_lines(csv), 5u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,final_loss,asr@1,asr@10,success_series");
    EXPECT_EQ(count_files(dir / "sw/series"), 4u);
    const std::string series = read_file(dir / "sw/series/n_30.csv");
    EXPECT_EQ(series.substr(0, series.find('\n')), "iter,success_rate");
}

TEST(Sweep, TokenCountGrid) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "sweep " + small_attack(data) + " -n 100 --axis m --values 5,10,25,50,100 -o " +
                                    (dir / "sw").string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines(read_file(dir / "sw/sweep.csv")), 6u);
}

TEST(Sweep, EmptyAxisRejected) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const CliRun r = aggd_cli(dir, "sweep " + small_attack(data) + " --axis n -o " + (dir / "sw").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--values"), std::string::npos) << r.err;
    EXPECT_EQ(aggd_cli(dir, "sweep " + small_attack(data) + " --axis q --values 4").code, 2);
}

TEST(Sweep, ParallelPointsMatchRowCount) {
    TempDir dir;
    const fs::path data = synth_fixture(dir);
    const std::string args = "sweep " + small_attack(data) + " --axis n --values 8,16,24 --parallel 2 -o ";
    ASSERT_EQ(aggd_cli(dir, args + (dir / "a").string()).code, 0);
    ASSERT_EQ(aggd_cli(dir, args + (dir / "b").string()).code, 0);
    EXPECT_EQ(count_lines(read_file(dir / "a/sweep.csv")), 4u);
    EXPECT_EQ(read_file(dir / "a/sweep.csv"), read_file(dir / "b/sweep.csv"));
}

TEST(Oracle, HiddenCommandFindsToyOptimum) {
    TempDir dir;
    const fs::path toy = toy_fixture(dir);
    // Train queries x and y; mean q = (0.5, 0.5); best single token is big_x or big_y (tie -> lower id).
    const CliRun r = aggd_cli(dir, "oracle --config " + (toy / "config.json").string() + " -m 1");
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["token_ids"], json::array({2}));
    EXPECT_EQ(j["loss"], -1.0);
}

TEST(Remote, AttackOverBridgeMatchesInProcess) {
    TempDir dir;
    // Vocabulary of the reference server: token i is the string "i".
    std::string vocab;
    for (int i = 0; i < 100; ++i) {
        vocab += std::to_string(i) + "\n";
    }
    const fs::path data = dir / "data";
    write_file(data / "vocab.txt", vocab);
    write_file(data / "corpus.jsonl", "{\"_id\": \"p1\", \"title\": \"\", \"text\": \"1 2 3\"}\n"
                                      "{\"_id\": \"p2\", \"title\": \"\", \"text\": \"40 50 60\"}\n");
    write_file(data / "queries.jsonl", "{\"_id\": \"q1\", \"text\": \"1 2\"}\n{\"_id\": \"q2\", \"text\": \"50 7\"}\n");
    for (const char* split : {"train", "dev", "test"}) {
        write_file(data / "qrels" / (std::string(split) + ".tsv"), "query-id\tcorpus-id\tscore\nq1\tp1\t1\nq2\tp2\t1\n");
    }
    const auto table = aggd::EmbeddingTable::random(100, 4, 1);
    aggd::EmbeddingCache mirror;
    for (int i = 0; i < 100; ++i) {
        mirror.ids.push_back(std::to_string(i));
    }
    mirror.vectors = table.matrix.cast<float>();
    aggd::write_embedding_cache(mirror, dir / "mirror.emb");

    const std::string common = "attack --data-dir " + data.string() + " --table " + (dir / "mirror.emb").string() +
                               " -m 3 -n 9 -N 20 --seed 4";
    const CliRun local = aggd_cli(dir, common + " --encoder mean-pool -o " + (dir / "local").string());
    ASSERT_EQ(local.code, 0) << local.err;
    const std::string server = std::string(AGGD_TEST_SERVER) + " --dim 4 --vocab-size 100 --seed 1";
    const CliRun remote = aggd_cli(dir, common + " --encoder remote -o " + (dir / "remote").string(),
                                "AGGD_BRIDGE_CMD='" + server + "'");
    ASSERT_EQ(remote.code, 0) << remote.err;
    const json a = json::parse(read_file(dir / "local/passages/passage_000.json"));
    const json b = json::parse(read_file(dir / "remote/passages/passage_000.json"));
    EXPECT_NEAR(a["loss"].get<double>(), b["loss"].get<double>(), 1e-5);
    const json manifest = json::parse(read_file(dir / "remote/manifest.json"));
    EXPECT_EQ(manifest["bridge"]["dim"], 4);

    const CliRun ev = aggd_cli(dir, "evaluate --data-dir " + data.string() + " --encoder remote --k-r 1 " +
                                     (dir / "remote").string(),
                            "AGGD_BRIDGE_CMD='" + server + "'");
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_EQ(json::parse(ev.out)["passages"], 1);

    const CliRun broken = aggd_cli(dir, common + " --encoder remote --bridge-cmd /nonexistent/server -o " +
                                         (dir / "broken").string());
    EXPECT_EQ(broken.code, 3);
}

}  // namespace
