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

#include "aggd/bridge.h"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cerrno>
#include <cstring>
#include <thread>

#include <openssl/evp.h>

extern char** environ;

namespace aggd {

namespace {

void
ignore_sigpipe() {
    static const bool once = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)once;
}

void
write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t w = ::write(fd, data.data() + off, data.size() - off);
        if (w < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw BridgeError(std::string("bridge write failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(w);
    }
}

// Pulls bytes from `fd` into `buffer` until a full line is available.
std::optional<std::string>
read_line_from(int fd, std::string& buffer, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        auto nl = buffer.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                 std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            return std::nullopt;
        }
        pollfd pfd{fd, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<std::int64_t>(left.count(), 1 << 30)));
        if (rc < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw BridgeError(std::string("bridge poll failed: ") + std::strerror(errno));
        }
        if (rc == 0) {
            return std::nullopt;
        }
        char chunk[65536];
        const ssize_t r = ::read(fd, chunk, sizeof(chunk));
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            throw BridgeError(std::string("bridge read failed: ") + std::strerror(errno));
        }
        if (r == 0) {
            throw BridgeError("bridge closed the connection");
        }
        buffer.append(chunk, static_cast<std::size_t>(r));
    }
}

std::vector<std::size_t>
read_shape(const nlohmann::json& resp) {
    if (!resp.contains("shape") || !resp["shape"].is_array() || resp["shape"].size() != 2) {
        throw BridgeError("response lacks a 2-d shape");
    }
    return {resp["shape"][0].get<std::size_t>(), resp["shape"][1].get<std::size_t>()};
}

MatrixF
read_matrix(const nlohmann::json& resp) {
    const auto shape = read_shape(resp);
    if (!resp.contains("data") || !resp["data"].is_string()) {
        throw BridgeError("response lacks a data payload");
    }
    const auto values = decode_float_payload(resp["data"].get<std::string>(), shape[0] * shape[1]);
    MatrixF m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

nlohmann::json
token_ids_json(const TokenSequence& seq) {
    return nlohmann::json(std::vector<TokenId>(seq.begin(), seq.end()));
}

RemoteLossGradient
parse_loss_and_grad(const nlohmann::json& resp, std::size_t m) {
    if (!resp.contains("loss") || !resp["loss"].is_number()) {
        throw BridgeError("loss_and_grad response lacks a loss");
    }
    const auto shape = read_shape(resp);
    if (shape[0] != m) {
        throw BridgeError("gradient shape mismatch: got " + std::to_string(shape[0]) + " rows for m=" +
                          std::to_string(m));
    }
    RemoteLossGradient out;
    out.loss = resp["loss"].get<double>();
    out.grad = read_matrix(resp).cast<double>();
    return out;
}

}  // namespace

std::string
encode_float_payload(std::span<const float> values) {
    std::string raw;
    raw.reserve(values.size() * 4);
    for (float f : values) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int shift = 0; shift < 32; shift += 8) {
            raw.push_back(static_cast<char>((bits >> shift) & 0xFFu));
        }
    }
    std::string out(4 * ((raw.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(raw.data()), static_cast<int>(raw.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<float>
decode_float_payload(std::string_view b64, std::size_t expected_count) {
    if (b64.size() % 4 != 0) {
        throw BridgeError("payload length is not a multiple of 4 base64 characters");
    }
    std::string raw(b64.size() / 4 * 3, '\0');
    const int n = b64.empty() ? 0
                              : EVP_DecodeBlock(reinterpret_cast<unsigned char*>(raw.data()),
                                                reinterpret_cast<const unsigned char*>(b64.data()),
                                                static_cast<int>(b64.size()));
    if (n < 0) {
        throw BridgeError("payload is not valid base64");
    }
    // EVP_DecodeBlock counts the zero bytes implied by '=' padding.
    std::size_t bytes = static_cast<std::size_t>(n);
    for (auto it = b64.rbegin(); it != b64.rend() && *it == '='; ++it) {
        --bytes;
    }
    if (bytes != expected_count * 4) {
        throw BridgeError("payload length " + std::to_string(bytes) + " bytes does not match " +
                          std::to_string(expected_count) + " float32 values");
    }
    std::vector<float> out(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + b])) << (8 * b);
        }
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

ChildProcessTransport::ChildProcessTransport(const std::vector<std::string>& argv) {
    if (argv.empty()) {
        throw BridgeError("empty bridge command");
    }
    ignore_sigpipe();
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) {
        throw BridgeError(std::string("pipe failed: ") + std::strerror(errno));
    }
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw BridgeError(std::string("pipe failed: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, in_pipe[1]);
    posix_spawn_file_actions_addclose(&actions, out_pipe[0]);

    std::vector<char*> args;
    for (const auto& a : argv) {
        args.push_back(const_cast<char*>(a.c_str()));
    }
    args.push_back(nullptr);
    pid_t pid = -1;
    const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw BridgeError("cannot launch bridge '" + argv[0] + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
}

std::unique_ptr<ChildProcessTransport>
ChildProcessTransport::from_shell_command(const std::string& command) {
    return std::make_unique<ChildProcessTransport>(std::vector<std::string>{"/bin/sh", "-c", command});
}

ChildProcessTransport::~ChildProcessTransport() {
    if (to_child_ >= 0) {
        ::close(to_child_);
    }
    if (from_child_ >= 0) {
        ::close(from_child_);
    }
    if (pid_ > 0) {
        // Closing stdin asks the server to exit; give it a moment before killing.
        int status = 0;
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
    }
}

void
ChildProcessTransport::send_line(const std::string& line) {
    write_all(to_child_, line + "\n");
}

std::optional<std::string>
ChildProcessTransport::read_line(std::chrono::milliseconds timeout) {
    return read_line_from(from_child_, buffer_, timeout);
}

TcpTransport::TcpTransport(const std::string& host, std::uint16_t port) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
        throw BridgeError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) {
            continue;
        }
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) {
        throw BridgeError("cannot connect to " + host + ":" + service);
    }
}

std::unique_ptr<TcpTransport>
TcpTransport::from_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) {
        throw BridgeError("bridge address must be host:port, got '" + address + "'");
    }
    const std::string digits = address.substr(colon + 1);
    int port = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc() || end != digits.data() + digits.size() || port <= 0 || port > 65535) {
        throw BridgeError("bad port in '" + address + "'");
    }
    return std::make_unique<TcpTransport>(address.substr(0, colon), static_cast<std::uint16_t>(port));
}

TcpTransport::~TcpTransport() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

void
TcpTransport::send_line(const std::string& line) {
    write_all(fd_, line + "\n");
}

std::optional<std::string>
TcpTransport::read_line(std::chrono::milliseconds timeout) {
    return read_line_from(fd_, buffer_, timeout);
}

BridgeSession::BridgeSession(std::unique_ptr<Transport> transport, std::chrono::milliseconds timeout)
    : transport_(std::move(transport)), timeout_(timeout) {
    if (!transport_) {
        throw BridgeError("bridge session needs a transport");
    }
}

BridgeSession::~BridgeSession() = default;

nlohmann::json
BridgeSession::await(std::int64_t id) {
    if (auto it = early_.find(id); it != early_.end()) {
        auto resp = std::move(it->second);
        early_.erase(it);
        return resp;
    }
    for (;;) {
        auto line = transport_->read_line(timeout_);
        if (!line) {
            throw BridgeTimeout("bridge timed out after " + std::to_string(timeout_.count()) +
                                " ms waiting for response " + std::to_string(id));
        }
        nlohmann::json resp;
        try {
            resp = nlohmann::json::parse(*line);
        } catch (const nlohmann::json::parse_error&) {
            throw BridgeError("bridge sent a non-JSON line: " + line->substr(0, 200));
        }
        if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer()) {
            throw BridgeError("bridge response lacks an integer id: " + line->substr(0, 200));
        }
        const auto rid = resp["id"].get<std::int64_t>();
        if (rid == id) {
            return resp;
        }
        if (rid < 0 || rid >= next_id_) {
            // The server could not attribute this reply to any request.
            throw BridgeError("bridge error: " + resp.value("error", std::string("response with unknown id ") +
                                                                         std::to_string(rid)));
        }
        early_.emplace(rid, std::move(resp));
    }
}

std::vector<nlohmann::json>
BridgeSession::call_many(std::vector<nlohmann::json> requests) {
    std::lock_guard<std::mutex> lock(mu_);
    if (closed_) {
        throw BridgeError("bridge session is shut down");
    }
    std::vector<std::int64_t> ids;
    ids.reserve(requests.size());
    for (auto& r : requests) {
        r["id"] = next_id_;
        ids.push_back(next_id_++);
    }
    std::vector<nlohmann::json> responses(requests.size());
    std::size_t sent = 0;
    for (std::size_t done = 0; done < requests.size(); ++done) {
        while (sent < requests.size() && sent < done + kBridgePipelineWindow) {
            transport_->send_line(requests[sent].dump());
            ++sent;
        }
        responses[done] = await(ids[done]);
    }
    for (const auto& resp : responses) {
        if (!resp.value("ok", false)) {
            throw BridgeError(resp.value("error", std::string("bridge request failed")));
        }
    }
    return responses;
}

nlohmann::json
BridgeSession::call(nlohmann::json request) {
    std::vector<nlohmann::json> one;
    one.push_back(std::move(request));
    return std::move(call_many(std::move(one)).front());
}

const BridgeInfo&
BridgeSession::handshake_info() {
    if (info_) {
        return *info_;
    }
    const auto resp = call({{"op", "info"}});
    BridgeInfo info;
    info.version = resp.value("version", std::string());
    if (!info.version.starts_with(kBridgeVersionPrefix)) {
        throw BridgeError("unsupported version '" + info.version + "' (need " + std::string(kBridgeVersionPrefix) +
                          ".x)");
    }
    info.dim = resp.at("dim").get<std::size_t>();
    info.vocab_size = resp.at("vocab_size").get<std::size_t>();
    info_ = info;
    return *info_;
}

QuerySetHandle
BridgeSession::set_queries(std::span<const std::string> texts) {
    if (texts.empty()) {
        throw InvalidArgument("set_queries needs at least one query text");
    }
    const auto resp = call({{"op", "set_queries"}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}});
    if (!resp.contains("handle") || !resp["handle"].is_string()) {
        throw BridgeError("set_queries response lacks a handle");
    }
    return QuerySetHandle{resp["handle"].get<std::string>()};
}

MatrixF
BridgeSession::encode_passages(std::span<const TokenSequence> seqs) {
    if (seqs.empty()) {
        return MatrixF(0, static_cast<Eigen::Index>(handshake_info().dim));
    }
    auto batch = nlohmann::json::array();
    for (const auto& s : seqs) {
        batch.push_back(token_ids_json(s));
    }
    const auto resp = call({{"op", "encode_passages"}, {"token_ids", std::move(batch)}});
    MatrixF out = read_matrix(resp);
    if (static_cast<std::size_t>(out.rows()) != seqs.size()) {
        throw BridgeError("encode_passages shape mismatch: got " + std::to_string(out.rows()) + " rows for " +
                          std::to_string(seqs.size()) + " sequences");
    }
    return out;
}

RemoteLossGradient
BridgeSession::loss_and_grad(const TokenSequence& seq, const QuerySetHandle& handle) {
    return std::move(loss_and_grad_many(std::span<const TokenSequence>(&seq, 1), handle).front());
}

std::vector<RemoteLossGradient>
BridgeSession::loss_and_grad_many(std::span<const TokenSequence> seqs, const QuerySetHandle& handle) {
    std::vector<nlohmann::json> requests;
    requests.reserve(seqs.size());
    for (const auto& s : seqs) {
        requests.push_back({{"op", "loss_and_grad"}, {"token_ids", token_ids_json(s)}, {"handle", handle.value}});
    }
    const auto responses = call_many(std::move(requests));
    std::vector<RemoteLossGradient> out;
    out.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        out.push_back(parse_loss_and_grad(responses[i], seqs[i].size()));
    }
    return out;
}

void
BridgeSession::shutdown() {
    if (closed_) {
        return;
    }
    call({{"op", "shutdown"}});
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
}

RemoteEncoder::RemoteEncoder(std::shared_ptr<BridgeSession> session, std::optional<EmbeddingTable> mirror)
    : session_(std::move(session)), mirror_(std::move(mirror)) {
    const auto& info = session_->handshake_info();
    dim_ = info.dim;
    vocab_size_ = info.vocab_size;
    if (mirror_ && mirror_->vocab_size() != vocab_size_) {
        throw InvalidArgument("mirrored embedding table has " + std::to_string(mirror_->vocab_size()) +
                              " rows but the bridge reports vocab_size " + std::to_string(vocab_size_));
    }
}

QuerySetHandle
RemoteEncoder::handle_of(const QueryBundle& queries) const {
    if (!queries.remote_handle) {
        throw InvalidArgument("query bundle was not registered with the bridge");
    }
    return QuerySetHandle{*queries.remote_handle};
}

Vector
RemoteEncoder::encode_passage(const TokenSequence& seq) const {
    return encode_passages(std::span<const TokenSequence>(&seq, 1)).row(0).transpose();
}

Matrix
RemoteEncoder::encode_passages(std::span<const TokenSequence> seqs) const {
    for (const auto& s : seqs) {
        if (s.empty()) {
            throw InvalidArgument("cannot encode an empty token sequence");
        }
    }
    return session_->encode_passages(seqs).cast<double>();
}

double
RemoteEncoder::loss(const TokenSequence& seq, const QueryBundle& queries) const {
    return session_->loss_and_grad(seq, handle_of(queries)).loss;
}

std::vector<double>
RemoteEncoder::losses(std::span<const TokenSequence> seqs, const QueryBundle& queries) const {
    const auto results = session_->loss_and_grad_many(seqs, handle_of(queries));
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& r : results) {
        out.push_back(r.loss);
    }
    return out;
}

LossGradient
RemoteEncoder::loss_gradient(const TokenSequence& seq, const QueryBundle& queries) const {
    auto r = session_->loss_and_grad(seq, handle_of(queries));
    if (mirror_ && static_cast<std::size_t>(r.grad.cols()) != mirror_->dim()) {
        throw BridgeError("gradient shape mismatch: width " + std::to_string(r.grad.cols()) +
                          " vs mirrored embedding dim " + std::to_string(mirror_->dim()));
    }
    return LossGradient{r.loss, std::move(r.grad)};
}

QueryBundle
RemoteEncoder::register_queries(std::span<const std::string> texts, std::span<const TokenSequence> tokenized) const {
    QueryBundle qb;
    qb.remote_handle = session_->set_queries(texts).value;
    if (!tokenized.empty()) {
        Matrix vectors = encode_passages(tokenized);
        auto local = make_query_bundle(std::move(vectors));
        qb.vectors = std::move(local.vectors);
        qb.mean = std::move(local.mean);
    }
    return qb;
}

}  // namespace aggd
