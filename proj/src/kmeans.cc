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

#include "aggd/kmeans.h"

#include <limits>
#include <optional>
#include <random>

namespace aggd {

namespace {

double
sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

std::vector<std::size_t>
assign_nearest(const Matrix& points, const Matrix& centroids) {
    std::vector<std::size_t> out(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
            const double d = sq_dist(points, p, centroids, c);
            if (d < best) {
                best = d;
                out[static_cast<std::size_t>(p)] = static_cast<std::size_t>(c);
            }
        }
    }
    return out;
}

double
inertia_of(const Matrix& points, const Matrix& centroids, const std::vector<std::size_t>& assignment) {
    double total = 0.0;
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
        total += sq_dist(points, p, centroids, static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(p)]));
    }
    return total;
}

Matrix
plus_plus_seeds(const Matrix& points, std::size_t k, std::mt19937_64& rng) {
    const auto n = static_cast<std::size_t>(points.rows());
    Matrix centroids(static_cast<Eigen::Index>(k), points.cols());
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    chosen[first] = true;
    centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            d2[p] = std::min(d2[p], sq_dist(points, static_cast<Eigen::Index>(p), centroids,
                                            static_cast<Eigen::Index>(c - 1)));
            total += d2[p];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = n;
            for (std::size_t p = 0; p < n; ++p) {
                if (d2[p] <= 0.0) {
                    continue;
                }
                pick = p;
                target -= d2[p];
                if (target < 0.0) {
                    break;
                }
            }
        } else {
            // Every remaining point coincides with a seed; take any unchosen one.
            std::vector<std::size_t> free;
            for (std::size_t p = 0; p < n; ++p) {
                if (!chosen[p]) {
                    free.push_back(p);
                }
            }
            pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
        }
        chosen[pick] = true;
        centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    }
    return centroids;
}

void
repair_empty(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& assignment, std::size_t k) {
    std::vector<std::size_t> sizes(k, 0);
    for (auto c : assignment) {
        ++sizes[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] > 0) {
            continue;
        }
        std::optional<std::size_t> victim;
        double far = -1.0;
        for (std::size_t p = 0; p < assignment.size(); ++p) {
            if (sizes[assignment[p]] <= 1) {
                continue;
            }
            const double d = sq_dist(points, static_cast<Eigen::Index>(p), centroids,
                                     static_cast<Eigen::Index>(assignment[p]));
            if (d > far) {
                far = d;
                victim = p;
            }
        }
        if (!victim) {
            break;  // unreachable while k <= n
        }
        --sizes[assignment[*victim]];
        assignment[*victim] = c;
        sizes[c] = 1;
    }
}

Matrix
cluster_means(const Matrix& points, const std::vector<std::size_t>& assignment, std::size_t k) {
    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < assignment.size(); ++p) {
        sums.row(static_cast<Eigen::Index>(assignment[p])) += points.row(static_cast<Eigen::Index>(p));
        ++counts[assignment[p]];
    }
    for (std::size_t c = 0; c < k; ++c) {
        sums.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
    }
    return sums;
}

}  // namespace

std::vector<std::size_t>
Clustering::members(std::size_t cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < assignment.size(); ++p) {
        if (assignment[p] == cluster) {
            out.push_back(p);
        }
    }
    return out;
}

Clustering
kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1 || k > n) {
        throw InvalidArgument("k-means needs 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    if (max_iters < 1) {
        throw InvalidArgument("k-means needs max_iters >= 1");
    }
    std::mt19937_64 rng(seed);
    Clustering out;
    out.centroids = plus_plus_seeds(points, k, rng);

    std::optional<std::vector<std::size_t>> previous;
    for (std::size_t it = 0; it < max_iters; ++it) {
        auto assignment = assign_nearest(points, out.centroids);
        if (previous && assignment == *previous) {
            out.converged = true;
            break;
        }
        repair_empty(points, out.centroids, assignment, k);
        out.centroids = cluster_means(points, assignment, k);
        out.inertia_history.push_back(inertia_of(points, out.centroids, assignment));
        out.iterations = it + 1;
        previous = std::move(assignment);
    }

    out.assignment = assign_nearest(points, out.centroids);
    out.inertia = inertia_of(points, out.centroids, out.assignment);
    if (!out.converged && previous && out.assignment != *previous) {
        out.inertia_history.push_back(out.inertia);
    }
    return out;
}

}  // namespace aggd
