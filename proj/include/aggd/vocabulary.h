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
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aggd/types.h"

namespace aggd {

class Vocabulary {
 public:
    static constexpr std::string_view kUnkToken = "[UNK]";

    Vocabulary() = default;

    // Token ids are the positions in `tokens`. Throws FormatError on an empty
    // list or a duplicate token string.
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    TokenId unk_id() const { return unk_id_; }

    const std::string& token(TokenId id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    // Returns unk_id() for strings not in the vocabulary.
    TokenId lookup(std::string_view token) const;
    bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }

 private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId unk_id_ = 0;
};

// One token per line. A trailing newline does not produce an extra token.
Vocabulary load_vocabulary(const std::filesystem::path& path);

// Lowercase, split on whitespace, map unknown pieces to unk_id.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

// Joins token strings with single spaces. Throws InvalidArgument on an id
// outside the vocabulary.
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

}  // namespace aggd
