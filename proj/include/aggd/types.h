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
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace aggd {

using TokenId = std::int32_t;

// Fixed-length token-id sequence; the adversarial passage under optimization.
using TokenSequence = std::vector<TokenId>;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

// Raised for malformed files (vocabulary, dataset, embedding cache).
class FormatError : public Error {
 public:
    using Error::Error;
};

// Raised when a caller violates an operation's precondition.
class InvalidArgument : public Error {
 public:
    using Error::Error;
};

}  // namespace aggd
