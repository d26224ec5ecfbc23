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

#include "aggd/vocabulary.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace aggd {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) {
        throw FormatError("vocabulary is empty");
    }
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) {
            throw FormatError("duplicate token '" + tokens_[i] + "' at line " + std::to_string(i + 1));
        }
    }
    auto unk = index_.find(std::string(kUnkToken));
    unk_id_ = unk == index_.end() ? 0 : unk->second;
}

const std::string&
Vocabulary::token(TokenId id) const {
    if (!contains(id)) {
        throw InvalidArgument("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                              std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

TokenId
Vocabulary::lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? unk_id_ : it->second;
}

Vocabulary
load_vocabulary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open vocabulary file " + path.string());
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        tokens.push_back(std::move(line));
    }
    return Vocabulary(std::move(tokens));
}

TokenSequence
tokenize(std::string_view text, const Vocabulary& vocab) {
    std::string lowered(text);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::istringstream pieces(lowered);
    TokenSequence ids;
    std::string piece;
    while (pieces >> piece) {
        ids.push_back(vocab.lookup(piece));
    }
    return ids;
}

std::string
detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += vocab.token(seq[i]);
    }
    return out;
}

}  // namespace aggd
