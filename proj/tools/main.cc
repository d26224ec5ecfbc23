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

// aggd: corpus-poisoning attacks against dense retrievers.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <functional>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "commands.h"

namespace {

namespace fs = std::filesystem;
using aggd::cli::ConfigError;
using aggd::cli::RunConfig;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Flag values applied on top of the config file; flags win.
class Overrides {
 public:
    template <typename T>
    CLI::Option* add(CLI::App* app, const std::string& name, const std::string& help,
             std::function<void(RunConfig&, const T&)> apply) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app->add_option(name, *value, help);
        if constexpr (!CLI::detail::is_mutable_container<T>::value) {
            opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
        apply_.push_back([opt, value, apply](RunConfig& c) {
            if (opt->count() > 0) {
                apply(c, *value);
            }
        });
        return opt;
    }

    void add_flag(CLI::App* app, const std::string& name, const std::string& help,
                  std::function<void(RunConfig&)> apply) {
        CLI::Option* opt = app->add_flag(name, help);
        apply_.push_back([opt, apply](RunConfig& c) {
            if (opt->count() > 0) {
                apply(c);
            }
        });
    }

    RunConfig resolve(const std::string& config_path) const {
        RunConfig c = config_path.empty() ? RunConfig{} : aggd::cli::load_config(config_path);
        for (const auto& f : apply_) {
            f(c);
        }
        return c;
    }

 private:
    std::vector<std::function<void(RunConfig&)>> apply_;
};

template <typename Parse>
auto
parsed(const char* flag, Parse parse) {
    return [flag, parse](const std::string& s) {
        try {
            return parse(s);
        } catch (const aggd::InvalidArgument& e) {
            throw ConfigError(flag, e.what());
        }
    };
}

fs::path
absolute(const std::string& p) {
    return fs::absolute(p).lexically_normal();
}

struct Common {
    std::string config;
    bool force = false;
    Overrides overrides;

    RunConfig resolve() const { return overrides.resolve(config); }
};

void
add_common(CLI::App* app, Common& common, bool attack_flags) {
    auto& ov = common.overrides;
    app->add_option("-c,--config", common.config, "JSON config file (an attack manifest works too)");

    ov.add<std::string>(app, "--data-dir", "directory with vocab.txt, corpus.jsonl, queries.jsonl, qrels/",
                        [](RunConfig& c, const std::string& v) { aggd::cli::set_data_dir(c.data, absolute(v)); });
    ov.add<std::string>(app, "--vocab", "vocabulary file", [](RunConfig& c, const std::string& v) {
        c.data.vocab = absolute(v);
    });
    ov.add<std::string>(app, "--corpus", "corpus.jsonl", [](RunConfig& c, const std::string& v) {
        c.data.corpus = absolute(v);
    });
    ov.add<std::string>(app, "--queries", "queries.jsonl", [](RunConfig& c, const std::string& v) {
        c.data.queries = absolute(v);
    });
    for (const char* split : {"train", "dev", "test"}) {
        const std::string name = split;
        ov.add<std::string>(app, "--qrels-" + name, name + " qrels TSV", [name](RunConfig& c, const std::string& v) {
            c.data.qrels[aggd::parse_split(name)] = absolute(v);
        });
    }

    ov.add<std::string>(app, "--encoder", "mean-pool | tanh-projection | remote",
                        [](RunConfig& c, const std::string& v) {
                            c.encoder.kind = parsed("--encoder", aggd::parse_encoder_kind)(v);
                        });
    ov.add<std::size_t>(app, "--dim", "encoder input width", [](RunConfig& c, const std::size_t& v) {
        c.encoder.dim = v;
    });
    ov.add<std::size_t>(app, "--dim-out", "tanh-projection output width", [](RunConfig& c, const std::size_t& v) {
        c.encoder.dim_out = v;
    });
    ov.add<std::uint64_t>(app, "--encoder-seed", "seed for random encoder parameters",
                          [](RunConfig& c, const std::uint64_t& v) { c.encoder.seed = v; });
    ov.add<std::string>(app, "--table", "embedding table file (mean-pool input, or remote mirror)",
                        [](RunConfig& c, const std::string& v) { c.encoder.table = absolute(v); });
    ov.add<std::string>(app, "--bridge-cmd", "command that starts a bridge server (default: $AGGD_BRIDGE_CMD)",
                        [](RunConfig& c, const std::string& v) { c.encoder.bridge_command = v; });
    ov.add<std::string>(app, "--bridge-addr", "host:port of a running bridge server",
                        [](RunConfig& c, const std::string& v) { c.encoder.bridge_address = v; });

    ov.add<std::vector<std::size_t>>(app, "--k-r", "retrieval depths for ASR, comma separated",
                                     [](RunConfig& c, const std::vector<std::size_t>& v) { c.eval.k_r = v; })
        ->delimiter(',')
        ->allow_extra_args(false);
    ov.add<std::string>(app, "--corpus-cache", "precomputed corpus embeddings", [](RunConfig& c, const std::string& v) {
        c.eval.corpus_cache = absolute(v);
    });
    ov.add<std::string>(app, "-o,--out", "output directory", [](RunConfig& c, const std::string& v) {
        c.output = absolute(v);
    });

    if (!attack_flags) {
        return;
    }
    ov.add<std::string>(app, "--strategy", "aggd | hotflip | random", [](RunConfig& c, const std::string& v) {
        c.attack.strategy = parsed("--strategy", aggd::parse_strategy)(v);
    });
    ov.add<std::size_t>(app, "-m,--tokens", "adversarial passage length m", [](RunConfig& c, const std::size_t& v) {
        c.attack.m = v;
    });
    ov.add<std::size_t>(app, "-n,--candidates", "candidate set size n", [](RunConfig& c, const std::size_t& v) {
        c.attack.n = v;
    });
    ov.add<std::size_t>(app, "-N,--iterations", "iteration budget N", [](RunConfig& c, const std::size_t& v) {
        c.attack.iterations = v;
    });
    ov.add<std::uint64_t>(app, "--seed", "attack seed", [](RunConfig& c, const std::uint64_t& v) {
        c.attack.seed = v;
    });
    ov.add<std::string>(app, "--init", "uniform-random | fixed-token | corpus-sample",
                        [](RunConfig& c, const std::string& v) {
                            c.attack.init = parsed("--init", aggd::parse_init_mode)(v);
                        });
    ov.add<aggd::TokenId>(app, "--fixed-token", "token id for --init fixed-token",
                          [](RunConfig& c, const aggd::TokenId& v) { c.attack.fixed_token = v; });
    ov.add<std::size_t>(app, "--log-eval-every", "log RetAcc every this many iterations (0: never)",
                        [](RunConfig& c, const std::size_t& v) { c.attack.log_eval_every = v; });
    ov.add_flag(app, "--timing", "record wall-clock time per iteration (traces stop being byte-reproducible)",
                [](RunConfig& c) { c.attack.record_wall_time = true; });
    ov.add<std::size_t>(app, "--clusters", "number of adversarial passages", [](RunConfig& c, const std::size_t& v) {
        c.clusters = v;
    });
    ov.add<std::size_t>(app, "--kmeans-iters", "Lloyd iteration cap", [](RunConfig& c, const std::size_t& v) {
        c.kmeans_iters = v;
    });
    ov.add<std::size_t>(app, "--trials", "analyze-candidates trial count", [](RunConfig& c, const std::size_t& v) {
        c.trials = v;
    });
    app->add_flag("--force", common.force, "overwrite an existing output directory");
}

}  // namespace

int
main(int argc, char** argv) {
    CLI::App app{"Corpus-poisoning attacks against dense retrievers", "aggd"};
    app.require_subcommand(1);
    app.set_version_flag("--version", AGGD_VERSION);

    Common attack_opts;
    CLI::App* attack = app.add_subcommand("attack", "craft adversarial passages");
    add_common(attack, attack_opts, true);

    Common eval_opts;
    std::vector<std::string> passages;
    std::string report_path;
    std::string write_cache;
    CLI::App* evaluate = app.add_subcommand("evaluate", "ASR and RetAcc for a set of adversarial passages");
    add_common(evaluate, eval_opts, false);
    evaluate->add_option("passages", passages, "passage JSON files or attack output directories");
    evaluate->add_option("--report", report_path, "also write the report JSON here");
    evaluate->add_option("--write-corpus-cache", write_cache, "save the corpus embeddings for reuse");

    Common analyze_opts;
    CLI::App* analyze = app.add_subcommand("analyze-candidates", "compare candidate sets of the three strategies");
    add_common(analyze, analyze_opts, true);

    Common sweep_opts;
    std::string axis;
    std::vector<std::size_t> values;
    std::size_t parallel = 1;
    CLI::App* sweep = app.add_subcommand("sweep", "attack and evaluate once per value of n or m");
    add_common(sweep, sweep_opts, true);
    sweep->add_option("--axis", axis, "n or m")->required();
    sweep->add_option("--values", values, "axis values, comma separated")->delimiter(',')->allow_extra_args(false);
    sweep->add_option("--parallel", parallel, "points run concurrently, each with a derived seed");

    Common oracle_opts;
    CLI::App* oracle = app.add_subcommand("oracle", "brute-force optimum (tiny vocabularies only)");
    add_common(oracle, oracle_opts, true);
    oracle->group("");

    aggd::SyntheticConfig synth_cfg;
    std::string synth_out;
    bool synth_force = false;
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
    synth->group("");
    synth->add_option("-o,--out", synth_out, "output directory")->required();
    synth->add_option("--vocab-size", synth_cfg.vocab_size);
    synth->add_option("--topics", synth_cfg.topics);
    synth->add_option("--tokens-per-topic", synth_cfg.tokens_per_topic);
    synth->add_option("--corpus-size", synth_cfg.corpus_size);
    synth->add_option("--passage-length", synth_cfg.passage_length);
    synth->add_option("--query-length", synth_cfg.query_length);
    synth->add_option("--train-queries", synth_cfg.train_queries);
    synth->add_option("--dev-queries", synth_cfg.dev_queries);
    synth->add_option("--test-queries", synth_cfg.test_queries);
    synth->add_option("--topic-probability", synth_cfg.topic_probability);
    synth->add_option("--query-noise", synth_cfg.query_noise);
    synth->add_option("--seed", synth_cfg.seed);
    synth->add_flag("--force", synth_force);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (attack->parsed()) {
            aggd::cli::cmd_attack(attack_opts.resolve(), attack_opts.force);
        } else if (evaluate->parsed()) {
            std::vector<fs::path> inputs(passages.begin(), passages.end());
            aggd::cli::cmd_evaluate(eval_opts.resolve(), inputs, report_path, write_cache);
        } else if (analyze->parsed()) {
            aggd::cli::cmd_analyze_candidates(analyze_opts.resolve(), analyze_opts.force);
        } else if (sweep->parsed()) {
            aggd::cli::cmd_sweep(sweep_opts.resolve(), axis, values, parallel, sweep_opts.force);
        } else if (oracle->parsed()) {
            aggd::cli::cmd_oracle(oracle_opts.resolve());
        } else if (synth->parsed()) {
            aggd::cli::cmd_synth(synth_cfg, synth_out, synth_force);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
