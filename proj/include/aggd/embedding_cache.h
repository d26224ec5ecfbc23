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

#include <filesystem>
#include <string>
#include <vector>

#include "aggd/types.h"

namespace aggd {

/// Passage vectors keyed by id, persisted so a corpus is encoded once.
///
/// On-disk layout (little-endian):
///   "AGGDEMB1" | u32 count | u32 dim | count*dim float32 row-major |
///   count * (u32 byte length + UTF-8 id)
struct EmbeddingCache {
    std::vector<std::string> ids;
    MatrixF vectors;  // ids.size() x dim

    std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
    std::size_t size() const { return ids.size(); }

    // Throws FormatError when row count != id count or a value is not finite.
    void validate() const;
};

inline constexpr char kEmbeddingCacheMagic[8] = {'A', 'G', 'G', 'D', 'E', 'M', 'B', '1'};

void write_embedding_cache(const EmbeddingCache& cache, const std::filesystem::path& path);

// Throws FormatError("bad magic"), FormatError("truncated ...") or a
// validation error.
EmbeddingCache read_embedding_cache(const std::filesystem::path& path);

}  // namespace aggd
