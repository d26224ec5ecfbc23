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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "aggd/retrieval.h"
#include "test_support.h"

namespace {

using namespace aggd;
using aggd::testing::random_matrix;

EmbeddingCache
cache_of(std::vector<std::string> ids, const Matrix& rows) {
    EmbeddingCache c;
    c.ids = std::move(ids);
    c.vectors = rows.cast<float>();
    return c;
}

Matrix
rows_of(std::initializer_list<std::initializer_list<double>> rows) {
    return aggd::testing::bundle_of(rows).vectors;
}

Vector
vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out(i++) = x;
    }
    return out;
}

TEST(BuildIndex, Examples) {
    auto corpus = cache_of({"p1", "p2"}, rows_of({{2, 0}, {0, 2}}));
    auto index = build_index(corpus, rows_of({{1.9, 0}}));
    EXPECT_EQ(index.size(), 3u);
    EXPECT_EQ(index.adversarial_count(), 1u);
    EXPECT_EQ(index.ids[2], "adv::0");
    EXPECT_TRUE(index.adversarial[2]);

    auto pure = build_index(corpus, Matrix(0, 2));
    EXPECT_EQ(pure.size(), 2u);
    EXPECT_EQ(pure.adversarial_count(), 0u);

    EXPECT_THROW(build_index(cache_of({"p1", "p1"}, rows_of({{1, 0}, {0, 1}})), Matrix(0, 2)), InvalidArgument);
    EXPECT_THROW(build_index(corpus, rows_of({{1, 2, 3}})), InvalidArgument);
    EXPECT_THROW(build_index(cache_of({"adv::7"}, rows_of({{1, 0}})), Matrix(0, 2)), InvalidArgument);
    Matrix nan = rows_of({{std::nan(""), 0}});
    EXPECT_THROW(build_index(corpus, nan), InvalidArgument);
}

TEST(BuildIndex, FromPassages) {
    MeanPoolEncoder enc(aggd::testing::toy_table());
    auto corpus = cache_of({"p1"}, rows_of({{1, 1}}));
    std::vector<TokenSequence> adv{{0, 2}, {1}};
    auto index = build_index(corpus, adv, enc);
    ASSERT_EQ(index.size(), 3u);
    EXPECT_FLOAT_EQ(index.vectors(1, 0), 1.5f);
    EXPECT_FLOAT_EQ(index.vectors(2, 1), 1.0f);
    EXPECT_EQ(build_index(corpus, std::vector<TokenSequence>{}, enc).size(), 1u);
}

TEST(TopK, Examples) {
    auto index = build_index(cache_of({"a", "b", "c"}, rows_of({{3}, {1}, {2}})), Matrix(0, 1));
    auto two = topk(index, vec({1}), 2);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two[0].row, 0u);
    EXPECT_EQ(two[1].row, 2u);
    EXPECT_EQ(topk(index, vec({1}), 10).size(), 3u);
    EXPECT_THROW(topk(index, vec({1}), 0), InvalidArgument);
    EXPECT_THROW(topk(index, vec({1, 2}), 1), InvalidArgument);
}

TEST(TopK, CorpusWinsTies) {
    auto index = build_index(cache_of({"p1"}, rows_of({{0, 1}})), rows_of({{0, 2}}));
    auto hits = topk(index, vec({1, 0}), 2);
    EXPECT_EQ(index.ids[hits[0].row], "p1");
    EXPECT_EQ(index.ids[hits[1].row], "adv::0");
}

// Sorts every row with the same ordering rule, then truncates.
RankedList
sort_truncate(const RetrievalIndex& index, const Vector& q, std::size_t k) {
    RankedList all;
    for (std::size_t r = 0; r < index.size(); ++r) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < q.size(); ++c) {
            s += static_cast<double>(index.vectors(static_cast<Eigen::Index>(r), c)) * q(c);
        }
        all.push_back({r, s});
    }
    std::stable_sort(all.begin(), all.end(), [&](const Hit& a, const Hit& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (index.adversarial[a.row] != index.adversarial[b.row]) {
            return !index.adversarial[a.row];
        }
        return index.ids[a.row] < index.ids[b.row];
    });
    all.resize(std::min(k, all.size()));
    return all;
}

TEST(TopK, MatchesSortTruncate) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> coarse(-2, 2);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t rows = 1 + trial % 40;
        const std::size_t dim = 1 + trial % 4;
        Matrix corpus = random_matrix(rng, rows, dim);
        if (trial % 3 == 0) {
            corpus = corpus.unaryExpr([&](double) { return static_cast<double>(coarse(rng)); });
        }
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < rows; ++i) {
            ids.push_back("d" + std::to_string((i * 7919) % 1000));
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        corpus.conservativeResize(static_cast<Eigen::Index>(ids.size()), corpus.cols());
        Matrix adv = random_matrix(rng, trial % 3, dim);
        if (trial % 3 == 0) {
            adv = adv.unaryExpr([&](double) { return static_cast<double>(coarse(rng)); });
        }
        auto index = build_index(cache_of(ids, corpus), adv);
        Vector q = random_matrix(rng, dim, 1).col(0);
        if (trial % 3 == 0) {
            q = q.unaryExpr([&](double) { return static_cast<double>(coarse(rng)); });
        }
        const std::size_t k = 1 + trial % 12;
        auto got = topk(index, q, k);
        auto want = sort_truncate(index, q, k);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].row, want[i].row) << "trial " << trial << " rank " << i;
            EXPECT_EQ(got[i].score, want[i].score);
        }
    }
}

TEST(Asr, HandExample) {
    auto index = build_index(cache_of({"p1", "p2"}, rows_of({{2, 0}, {0, 2}})), rows_of({{1.9, 0}}));
    std::vector<std::size_t> ks{1, 2};
    std::vector<std::string> qids{"q1", "q2"};
    auto report = attack_success_rate(index, rows_of({{1, 0}, {0, 1}}), ks, qids);
    EXPECT_EQ(report.asr.at(1), 0.0);
    EXPECT_EQ(report.asr.at(2), 0.5);
    EXPECT_EQ(report.n_q, 2u);
    EXPECT_EQ(report.first_adversarial_rank[0], std::optional<std::size_t>(1));
    EXPECT_FALSE(report.first_adversarial_rank[1].has_value());
    auto j = report.to_json();
    EXPECT_EQ(j["asr"]["1"], 0.0);
    EXPECT_EQ(j["asr"]["2"], 0.5);
    EXPECT_EQ(j["per_query"][0]["query_id"], "q1");
    EXPECT_EQ(j["per_query"][0]["hit"]["2"], true);
    EXPECT_TRUE(j["per_query"][1]["first_adv_rank"].is_null());
}

TEST(Asr, DominanceAndSaturation) {
    std::mt19937_64 rng(3);
    Matrix corpus = random_matrix(rng, 10, 3);
    Matrix queries = random_matrix(rng, 6, 3).cwiseAbs();
    auto index = build_index(cache_of({"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"}, corpus),
                             rows_of({{50, 50, 50}}));
    std::vector<std::size_t> one{1};
    EXPECT_EQ(attack_success_rate(index, queries, one).asr.at(1), 1.0);

    auto weak = build_index(cache_of({"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"}, corpus),
                            rows_of({{-50, -50, -50}}));
    std::vector<std::size_t> all{weak.size()};
    EXPECT_EQ(attack_success_rate(weak, queries, all).asr.at(weak.size()), 1.0);

    auto none = build_index(cache_of({"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"}, corpus), Matrix(0, 3));
    std::vector<std::size_t> fifty{50};
    EXPECT_EQ(attack_success_rate(none, queries, fifty).asr.at(50), 0.0);
    std::vector<std::size_t> bad{0};
    EXPECT_THROW(attack_success_rate(none, queries, bad), InvalidArgument);
}

TEST(Asr, MonotoneInK) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix corpus = random_matrix(rng, 20, 4);
        std::vector<std::string> ids;
        for (int i = 0; i < 20; ++i) {
            ids.push_back(std::to_string(i));
        }
        auto index = build_index(cache_of(ids, corpus), random_matrix(rng, 2, 4));
        std::vector<std::size_t> ks{1, 2, 3, 5, 8, 13, 22};
        auto report = attack_success_rate(index, random_matrix(rng, 15, 4), ks);
        double prev = 0.0;
        for (const auto& [k, v] : report.asr) {
            EXPECT_GE(v, prev);
            EXPECT_LE(v, 1.0);
            prev = v;
        }
        EXPECT_EQ(report.asr.at(22), 1.0);
    }
}

TEST(RetAcc, Examples) {
    ValidationSet val;
    val.queries = rows_of({{1, 0}, {0, 1}});
    val.gold = rows_of({{2, 0}, {0, 2}});
    EXPECT_EQ(retrieval_accuracy(val, Matrix(0, 2)), 1.0);
    EXPECT_EQ(retrieval_accuracy(val, rows_of({{1.9, 0}})), 1.0);
    // Identical to the first gold passage: a tie counts as failure.
    EXPECT_EQ(retrieval_accuracy(val, rows_of({{2, 0}})), 0.5);
    EXPECT_EQ(retrieval_accuracy(val, rows_of({{3, 3}})), 0.0);
    EXPECT_THROW(retrieval_accuracy(val, rows_of({{1, 1, 1}})), InvalidArgument);
    ValidationSet empty;
    EXPECT_THROW(retrieval_accuracy(empty, Matrix(0, 2)), InvalidArgument);
}

TEST(RetAcc, AddingAdversarialRowsNeverHelps) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        ValidationSet val;
        val.queries = random_matrix(rng, 12, 3);
        val.gold = random_matrix(rng, 12, 3);
        Matrix adv = random_matrix(rng, 1, 3);
        double prev = retrieval_accuracy(val, adv);
        for (int extra = 0; extra < 4; ++extra) {
            adv.conservativeResize(adv.rows() + 1, 3);
            adv.row(adv.rows() - 1) = random_matrix(rng, 1, 3);
            const double now = retrieval_accuracy(val, adv);
            EXPECT_LE(now, prev);
            prev = now;
        }
    }
}

}  // namespace
