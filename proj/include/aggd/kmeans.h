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
#include <vector>

#include "aggd/types.h"

namespace aggd {

struct Clustering {
    Matrix centroids;                 // k x dim
    std::vector<std::size_t> assignment;
    double inertia = 0.0;             // sum of squared distances to assigned centroids
    std::vector<double> inertia_history;  // after each Lloyd iteration
    std::size_t iterations = 0;
    bool converged = false;

    std::vector<std::size_t> members(std::size_t cluster) const;
};

// Lloyd's algorithm under squared Euclidean distance with k-means++ seeding.
// Empty clusters steal the point farthest from its centroid. The returned
// assignment is nearest-centroid for the returned centroids.
Clustering kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed);

}  // namespace aggd
