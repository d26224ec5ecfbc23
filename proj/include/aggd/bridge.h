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

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aggd/encoder.h"
#include "aggd/types.h"

namespace aggd {

// Client side of the line-delimited JSON protocol spoken by an external
// encoder process:
//
//   request  {"id": int, "op": str, ...}
//   response {"id": int, "ok": true, ...} | {"id": int, "ok": false, "error": str}
//
//   info            -> {dim, vocab_size, version}
//   set_queries     {texts}               -> {handle}
//   encode_passages {token_ids: [[int]]}  -> {shape: [n, dim], data: b64}
//   loss_and_grad   {token_ids, handle}   -> {loss, shape: [m, dim], data: b64}
//   shutdown                              -> {}
//
// `data` is base64 of little-endian float32, row-major.

inline constexpr std::string_view kBridgeVersionPrefix = "aggd-bridge/1";
inline constexpr std::size_t kBridgePipelineWindow = 16;
inline constexpr std::chrono::milliseconds kBridgeDefaultTimeout{30'000};

class BridgeError : public Error {
 public:
    using Error::Error;
};

class BridgeTimeout : public BridgeError {
 public:
    using BridgeError::BridgeError;
};

std::string encode_float_payload(std::span<const float> values);
// Throws BridgeError("payload length ...") unless the payload holds exactly
// `expected_count` floats.
std::vector<float> decode_float_payload(std::string_view b64, std::size_t expected_count);

// Line transport. read_line returns nullopt on timeout and throws BridgeError
// once the peer has closed the stream.
class Transport {
 public:
    virtual ~Transport() = default;
    virtual void send_line(const std::string& line) = 0;
    virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;
};

// Spawns `argv` and talks over its stdin/stdout. stderr is inherited.
class ChildProcessTransport final : public Transport {
 public:
    explicit ChildProcessTransport(const std::vector<std::string>& argv);
    // Runs `command` through /bin/sh -c.
    static std::unique_ptr<ChildProcessTransport> from_shell_command(const std::string& command);
    ~ChildProcessTransport() override;

    ChildProcessTransport(const ChildProcessTransport&) = delete;
    ChildProcessTransport& operator=(const ChildProcessTransport&) = delete;

    void send_line(const std::string& line) override;
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

 private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

class TcpTransport final : public Transport {
 public:
    TcpTransport(const std::string& host, std::uint16_t port);
    // "host:port"
    static std::unique_ptr<TcpTransport> from_address(const std::string& address);
    ~TcpTransport() override;

    TcpTransport(const TcpTransport&) = delete;
    TcpTransport& operator=(const TcpTransport&) = delete;

    void send_line(const std::string& line) override;
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

 private:
    int fd_ = -1;
    std::string buffer_;
};

struct BridgeInfo {
    std::size_t dim = 0;
    std::size_t vocab_size = 0;
    std::string version;
};

// Opaque server-issued name for a registered query set; valid only within the
// issuing session.
struct QuerySetHandle {
    std::string value;
};

struct RemoteLossGradient {
    double loss = 0.0;
    Matrix grad;
};

// One logical connection. Calls are serialized internally; up to
// kBridgePipelineWindow requests are in flight and responses are matched by
// id in whatever order they arrive.
class BridgeSession {
 public:
    explicit BridgeSession(std::unique_ptr<Transport> transport,
                           std::chrono::milliseconds timeout = kBridgeDefaultTimeout);
    ~BridgeSession();

    BridgeSession(const BridgeSession&) = delete;
    BridgeSession& operator=(const BridgeSession&) = delete;

    // Performs the `info` exchange once and caches the result. Throws
    // BridgeError("unsupported version ...") for a foreign server.
    const BridgeInfo& handshake_info();
    const std::optional<BridgeInfo>& cached_info() const { return info_; }

    QuerySetHandle set_queries(std::span<const std::string> texts);
    MatrixF encode_passages(std::span<const TokenSequence> seqs);
    RemoteLossGradient loss_and_grad(const TokenSequence& seq, const QuerySetHandle& handle);
    std::vector<RemoteLossGradient> loss_and_grad_many(std::span<const TokenSequence> seqs,
                                                       const QuerySetHandle& handle);
    void shutdown();

    // Raw exchange: assigns ids, pipelines, and returns responses in request
    // order. Throws BridgeError with the server's text for `ok: false`.
    std::vector<nlohmann::json> call_many(std::vector<nlohmann::json> requests);
    nlohmann::json call(nlohmann::json request);

    std::int64_t next_request_id() const { return next_id_; }

 private:
    nlohmann::json await(std::int64_t id);

    std::unique_ptr<Transport> transport_;
    std::chrono::milliseconds timeout_;
    std::int64_t next_id_ = 1;
    std::map<std::int64_t, nlohmann::json> early_;  // responses that arrived ahead of their turn
    std::optional<BridgeInfo> info_;
    bool closed_ = false;
    std::mutex mu_;
};

// Encoder whose passage tower and loss gradients live in a bridge server.
// Token scoring needs a local mirror of the server's input embedding table.
class RemoteEncoder final : public Encoder {
 public:
    RemoteEncoder(std::shared_ptr<BridgeSession> session, std::optional<EmbeddingTable> mirror = std::nullopt);

    EncoderKind kind() const override { return EncoderKind::kRemote; }
    std::size_t dim() const override { return dim_; }
    std::size_t vocab_size() const override { return vocab_size_; }
    const EmbeddingTable* embedding_table() const override { return mirror_ ? &*mirror_ : nullptr; }

    Vector encode_passage(const TokenSequence& seq) const override;
    Matrix encode_passages(std::span<const TokenSequence> seqs) const override;
    double loss(const TokenSequence& seq, const QueryBundle& queries) const override;
    std::vector<double> losses(std::span<const TokenSequence> seqs, const QueryBundle& queries) const override;
    LossGradient loss_gradient(const TokenSequence& seq, const QueryBundle& queries) const override;

    // Registers the query texts server-side. When `tokenized` is given the
    // bundle also carries client-visible vectors from encode_passages, which
    // is exact only for retrievers with a shared query/passage tower.
    QueryBundle register_queries(std::span<const std::string> texts,
                                 std::span<const TokenSequence> tokenized = {}) const;

    BridgeSession& session() const { return *session_; }

 private:
    QuerySetHandle handle_of(const QueryBundle& queries) const;

    std::shared_ptr<BridgeSession> session_;
    std::optional<EmbeddingTable> mirror_;
    std::size_t dim_ = 0;
    std::size_t vocab_size_ = 0;
};

}  // namespace aggd
