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

#include "aggd/retrieval.h"

#include <algorithm>
#include <limits>
#include <queue>
#include <unordered_set>

namespace aggd {

namespace {

double
row_dot(const MatrixF& m, std::size_t row, const Vector& q) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        s += static_cast<double>(m(static_cast<Eigen::Index>(row), c)) * q(c);
    }
    return s;
}

// True when `a` ranks ahead of `b`.
struct RanksAhead {
    const RetrievalIndex& index;

    bool operator()(const Hit& a, const Hit& b) const {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        const bool adv_a = index.adversarial[a.row];
        const bool adv_b = index.adversarial[b.row];
        if (adv_a != adv_b) {
            return !adv_a;
        }
        return index.ids[a.row] < index.ids[b.row];
    }
};

}  // namespace

std::size_t
RetrievalIndex::adversarial_count() const {
    return static_cast<std::size_t>(std::count(adversarial.begin(), adversarial.end(), true));
}

RetrievalIndex
build_index(const EmbeddingCache& corpus, const Matrix& adversarial_vectors) {
    corpus.validate();
    const std::size_t dim = corpus.size() > 0 ? corpus.dim() : static_cast<std::size_t>(adversarial_vectors.cols());
    if (adversarial_vectors.rows() > 0 && static_cast<std::size_t>(adversarial_vectors.cols()) != dim) {
        throw InvalidArgument("adversarial vectors have dim " + std::to_string(adversarial_vectors.cols()) +
                              " but corpus has dim " + std::to_string(dim));
    }
    if (!adversarial_vectors.allFinite()) {
        throw InvalidArgument("adversarial vectors must be finite");
    }
    RetrievalIndex index;
    const auto n_corpus = static_cast<Eigen::Index>(corpus.size());
    const auto n_adv = adversarial_vectors.rows();
    index.vectors.resize(n_corpus + n_adv, static_cast<Eigen::Index>(dim));
    if (n_corpus > 0) {
        index.vectors.topRows(n_corpus) = corpus.vectors;
    }
    if (n_adv > 0) {
        index.vectors.bottomRows(n_adv) = adversarial_vectors.cast<float>();
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : corpus.ids) {
        if (!seen.insert(id).second) {
            throw InvalidArgument("duplicate corpus id " + id);
        }
        if (id.starts_with(kAdversarialIdPrefix)) {
            throw InvalidArgument("corpus id " + id + " uses the reserved adversarial prefix");
        }
        index.ids.push_back(id);
        index.adversarial.push_back(false);
    }
    for (Eigen::Index i = 0; i < n_adv; ++i) {
        index.ids.push_back(std::string(kAdversarialIdPrefix) + std::to_string(i));
        index.adversarial.push_back(true);
    }
    return index;
}

RetrievalIndex
build_index(const EmbeddingCache& corpus, std::span<const TokenSequence> adversarial, const Encoder& enc) {
    Matrix vectors = enc.encode_passages(adversarial);
    if (adversarial.empty()) {
        vectors.resize(0, static_cast<Eigen::Index>(enc.dim()));
    }
    return build_index(corpus, vectors);
}

RankedList
topk(const RetrievalIndex& index, const Vector& query, std::size_t k) {
    if (k == 0) {
        throw InvalidArgument("k_r must be at least 1");
    }
    if (static_cast<std::size_t>(query.size()) != index.dim()) {
        throw InvalidArgument("query dim " + std::to_string(query.size()) + " does not match index dim " +
                              std::to_string(index.dim()));
    }
    RanksAhead ahead{index};
    // Max-heap under `ahead` keeps the weakest retained hit on top.
    std::priority_queue<Hit, std::vector<Hit>, RanksAhead> heap(ahead);
    for (std::size_t row = 0; row < index.size(); ++row) {
        Hit h{row, row_dot(index.vectors, row, query)};
        if (heap.size() < k) {
            heap.push(h);
        } else if (ahead(h, heap.top())) {
            heap.pop();
            heap.push(h);
        }
    }
    RankedList out;
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

nlohmann::json
EvalReport::to_json() const {
    nlohmann::json j;
    j["asr"] = nlohmann::json::object();
    for (const auto& [k, v] : asr) {
        j["asr"][std::to_string(k)] = v;
    }
    j["retacc"] = retacc;
    j["success_rate"] = success_rate();
    j["n_q"] = n_q;
    j["n_val"] = n_val;
    auto per_query = nlohmann::json::array();
    for (std::size_t i = 0; i < first_adversarial_rank.size(); ++i) {
        nlohmann::json q;
        if (i < query_ids.size()) {
            q["query_id"] = query_ids[i];
        }
        q["first_adv_rank"] = nlohmann::json(nullptr);
        if (first_adversarial_rank[i]) {
            q["first_adv_rank"] = *first_adversarial_rank[i];
        }
        nlohmann::json hits = nlohmann::json::object();
        for (const auto& [k, v] : asr) {
            hits[std::to_string(k)] = first_adversarial_rank[i].has_value() && *first_adversarial_rank[i] < k;
        }
        q["hit"] = std::move(hits);
        per_query.push_back(std::move(q));
    }
    j["per_query"] = std::move(per_query);
    return j;
}

EvalReport
attack_success_rate(const RetrievalIndex& index, const Matrix& queries, std::span<const std::size_t> ks,
                    std::span<const std::string> query_ids) {
    if (ks.empty()) {
        throw InvalidArgument("at least one k_r is required");
    }
    EvalReport report;
    report.n_q = static_cast<std::size_t>(queries.rows());
    report.query_ids.assign(query_ids.begin(), query_ids.end());
    const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
    std::map<std::size_t, std::size_t> hits;
    for (std::size_t k : ks) {
        if (k == 0) {
            throw InvalidArgument("k_r must be at least 1");
        }
        hits[k] = 0;
    }
    for (Eigen::Index qi = 0; qi < queries.rows(); ++qi) {
        std::optional<std::size_t> first;
        if (index.adversarial_count() > 0) {
            const Vector q = queries.row(qi).transpose();
            const RankedList ranked = topk(index, q, k_max);
            for (std::size_t r = 0; r < ranked.size(); ++r) {
                if (index.adversarial[ranked[r].row]) {
                    first = r;
                    break;
                }
            }
        }
        report.first_adversarial_rank.push_back(first);
        for (auto& [k, count] : hits) {
            if (first && *first < k) {
                ++count;
            }
        }
    }
    for (const auto& [k, count] : hits) {
        report.asr[k] = report.n_q == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(report.n_q);
    }
    return report;
}

double
retrieval_accuracy(const ValidationSet& validation, const Matrix& adversarial_vectors) {
    if (validation.gold.rows() != validation.queries.rows()) {
        throw InvalidArgument("validation queries and gold passages must pair up row-wise");
    }
    if (validation.size() == 0) {
        throw InvalidArgument("validation set is empty");
    }
    if (adversarial_vectors.rows() == 0) {
        return 1.0;
    }
    if (adversarial_vectors.cols() != validation.queries.cols()) {
        throw InvalidArgument("adversarial vector dim does not match validation queries");
    }
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < validation.queries.rows(); ++i) {
        const double gold = validation.queries.row(i).dot(validation.gold.row(i));
        double best_adv = -std::numeric_limits<double>::infinity();
        for (Eigen::Index a = 0; a < adversarial_vectors.rows(); ++a) {
            best_adv = std::max(best_adv, validation.queries.row(i).dot(adversarial_vectors.row(a)));
        }
        if (gold > best_adv) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(validation.size());
}

}  // namespace aggd
