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

#include "aggd/embedding_cache.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace aggd {

namespace {

void
put_u32(std::string& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<char>((v >> shift) & 0xFFu));
    }
}

class Reader {
 public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("truncated embedding cache while reading ") + what);
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void
EmbeddingCache::validate() const {
    if (static_cast<std::size_t>(vectors.rows()) != ids.size()) {
        throw FormatError("embedding cache has " + std::to_string(vectors.rows()) + " rows but " +
                          std::to_string(ids.size()) + " ids");
    }
    if (!vectors.allFinite()) {
        throw FormatError("embedding cache contains non-finite values");
    }
}

void
write_embedding_cache(const EmbeddingCache& cache, const std::filesystem::path& path) {
    cache.validate();
    std::string out(kEmbeddingCacheMagic, sizeof(kEmbeddingCacheMagic));
    put_u32(out, static_cast<std::uint32_t>(cache.size()));
    put_u32(out, static_cast<std::uint32_t>(cache.dim()));
    for (Eigen::Index r = 0; r < cache.vectors.rows(); ++r) {
        for (Eigen::Index c = 0; c < cache.vectors.cols(); ++c) {
            put_u32(out, std::bit_cast<std::uint32_t>(cache.vectors(r, c)));
        }
    }
    for (const auto& id : cache.ids) {
        put_u32(out, static_cast<std::uint32_t>(id.size()));
        out += id;
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw FormatError("cannot write " + path.string());
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw FormatError("write failed for " + path.string());
    }
}

EmbeddingCache
read_embedding_cache(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw FormatError("cannot open " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader reader(bytes);
    std::string magic = reader.str(sizeof(kEmbeddingCacheMagic), "magic");
    if (std::memcmp(magic.data(), kEmbeddingCacheMagic, sizeof(kEmbeddingCacheMagic)) != 0) {
        throw FormatError("bad magic in " + path.string());
    }
    const std::uint32_t count = reader.u32("count");
    const std::uint32_t dim = reader.u32("dim");
    const std::uint64_t floats = static_cast<std::uint64_t>(count) * dim;
    // Every row needs its floats plus at least a length prefix.
    if (floats * 4 + static_cast<std::uint64_t>(count) * 4 > reader.remaining()) {
        throw FormatError("truncated embedding cache: header declares " + std::to_string(count) + "x" +
                          std::to_string(dim) + " vectors");
    }
    EmbeddingCache cache;
    cache.vectors.resize(count, dim);
    for (std::uint32_t r = 0; r < count; ++r) {
        for (std::uint32_t c = 0; c < dim; ++c) {
            cache.vectors(r, c) = reader.f32("vectors");
        }
    }
    cache.ids.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = reader.u32("id length");
        cache.ids.push_back(reader.str(len, "id"));
    }
    if (reader.remaining() != 0) {
        throw FormatError("embedding cache has " + std::to_string(reader.remaining()) + " trailing bytes");
    }
    cache.validate();
    return cache;
}

}  // namespace aggd
