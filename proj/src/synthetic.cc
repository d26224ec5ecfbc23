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

#include "aggd/synthetic.h"

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace aggd {

namespace {

std::string
join_tokens(const std::vector<std::string>& vocab, const std::vector<std::size_t>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += vocab[ids[i]];
    }
    return out;
}

}  // namespace

SyntheticData
make_synthetic(const SyntheticConfig& config) {
    if (config.vocab_size < 1 || config.topics < 1 || config.corpus_size < config.topics) {
        throw InvalidArgument("synthetic corpus needs vocab_size >= 1 and corpus_size >= topics");
    }
    std::mt19937_64 rng(config.seed);
    std::vector<std::string> tokens;
    tokens.reserve(config.vocab_size);
    for (std::size_t i = 0; i < config.vocab_size; ++i) {
        tokens.push_back("w" + std::to_string(i));
    }

    std::uniform_int_distribution<std::size_t> any_token(0, config.vocab_size - 1);
    std::bernoulli_distribution from_topic(config.topic_probability);
    std::bernoulli_distribution noisy(config.query_noise);

    std::vector<std::vector<std::size_t>> pools(config.topics);
    for (auto& pool : pools) {
        for (std::size_t i = 0; i < config.tokens_per_topic; ++i) {
            pool.push_back(any_token(rng));
        }
    }

    SyntheticData data{Vocabulary(tokens), Dataset{}};
    std::vector<std::vector<std::size_t>> passages;
    for (std::size_t p = 0; p < config.corpus_size; ++p) {
        const auto& pool = pools[p % config.topics];
        std::uniform_int_distribution<std::size_t> in_pool(0, pool.size() - 1);
        std::vector<std::size_t> ids;
        for (std::size_t t = 0; t < config.passage_length; ++t) {
            ids.push_back(from_topic(rng) ? pool[in_pool(rng)] : any_token(rng));
        }
        data.dataset.corpus.emplace("p" + std::to_string(p), Passage{"", join_tokens(tokens, ids)});
        passages.push_back(std::move(ids));
    }

    std::uniform_int_distribution<std::size_t> any_passage(0, config.corpus_size - 1);
    std::uniform_int_distribution<std::size_t> in_passage(0, config.passage_length - 1);
    const std::pair<Split, std::size_t> splits[] = {
        {Split::kTrain, config.train_queries},
        {Split::kDev, config.dev_queries},
        {Split::kTest, config.test_queries},
    };
    std::size_t qn = 0;
    for (const auto& [split, count] : splits) {
        auto& qrels = data.dataset.qrels[split];
        for (std::size_t i = 0; i < count; ++i, ++qn) {
            const std::size_t gold = any_passage(rng);
            std::vector<std::size_t> ids;
            for (std::size_t t = 0; t < config.query_length; ++t) {
                ids.push_back(noisy(rng) ? any_token(rng) : passages[gold][in_passage(rng)]);
            }
            const std::string qid = "q" + std::to_string(qn);
            data.dataset.queries.emplace(qid, join_tokens(tokens, ids));
            qrels.insert(Qrel{qid, "p" + std::to_string(gold), 1});
        }
    }
    return data;
}

void
write_beir(const SyntheticData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "qrels");
    {
        std::ofstream out(dir / "vocab.txt");
        for (const auto& t : data.vocab.tokens()) {
            out << t << '\n';
        }
    }
    {
        std::ofstream out(dir / "corpus.jsonl");
        for (const auto& [id, p] : data.dataset.corpus) {
            out << nlohmann::json{{"_id", id}, {"title", p.title}, {"text", p.text}}.dump() << '\n';
        }
    }
    {
        std::ofstream out(dir / "queries.jsonl");
        for (const auto& [id, text] : data.dataset.queries) {
            out << nlohmann::json{{"_id", id}, {"text", text}}.dump() << '\n';
        }
    }
    for (Split split : {Split::kTrain, Split::kDev, Split::kTest}) {
        std::ofstream out(dir / "qrels" / (std::string(to_string(split)) + ".tsv"));
        out << "query-id\tcorpus-id\tscore\n";
        for (const auto& q : data.dataset.gold_pairs(split)) {
            out << q.query_id << '\t' << q.passage_id << '\t' << q.relevance << '\n';
        }
    }
}

}  // namespace aggd
