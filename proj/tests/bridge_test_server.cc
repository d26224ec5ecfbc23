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

// Reference bridge server for tests: mean-pool encoder over a seeded table,
// speaking the line protocol on stdio or on one TCP connection. Failure modes
// exercise the client's error paths.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <openssl/evp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "aggd/encoder.h"

namespace {

using nlohmann::json;

struct Options {
    std::size_t dim = 4;
    std::size_t vocab_size = 100;
    std::uint64_t seed = 1;
    std::string version = "aggd-bridge/1.0";
    std::string mode = "normal";
    bool tcp = false;
};

class LineIo {
 public:
    LineIo(int in, int out) : in_(in), out_(out) {}

    // nullopt on timeout; throws on EOF.
    std::optional<std::string> read_line(int timeout_ms) {
        for (;;) {
            if (auto nl = buf_.find('\n'); nl != std::string::npos) {
                std::string line = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                return line;
            }
            pollfd p{in_, POLLIN, 0};
            int r = ::poll(&p, 1, timeout_ms);
            if (r == 0) {
                return std::nullopt;
            }
            char chunk[4096];
            ssize_t n = ::read(in_, chunk, sizeof(chunk));
            if (n <= 0) {
                throw std::runtime_error("eof");
            }
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void write_line(const std::string& line) {
        std::string data = line + "\n";
        std::size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::write(out_, data.data() + off, data.size() - off);
            if (n <= 0) {
                throw std::runtime_error("write failed");
            }
            off += static_cast<std::size_t>(n);
        }
    }

 private:
    int in_;
    int out_;
    std::string buf_;
};

std::string
b64(const std::vector<float>& values) {
    std::string raw(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) {
            raw[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
        }
    }
    std::string out(4 * ((raw.size() + 2) / 3) + 1, '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(raw.data()), static_cast<int>(raw.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

class Server {
 public:
    explicit Server(const Options& opt)
        : opt_(opt), table_(aggd::EmbeddingTable::random(opt.vocab_size, opt.dim, opt.seed)) {}

    std::optional<json> handle(const std::string& line) {
        json req;
        try {
            req = json::parse(line);
        } catch (const json::parse_error&) {
            return json{{"id", -1}, {"ok", false}, {"error", "malformed request"}};
        }
        if (!req.is_object() || !req.contains("id") || !req["id"].is_number_integer()) {
            return json{{"id", -1}, {"ok", false}, {"error", "request lacks an integer id"}};
        }
        const auto id = req["id"].get<std::int64_t>();
        try {
            json resp = dispatch(req);
            resp["id"] = id;
            resp["ok"] = true;
            return resp;
        } catch (const std::exception& e) {
            return json{{"id", id}, {"ok", false}, {"error", e.what()}};
        }
    }

    bool done() const { return done_; }

 private:
    std::vector<double> pool(const std::vector<int>& ids) const {
        if (ids.empty()) {
            throw std::runtime_error("empty token sequence");
        }
        std::vector<double> u(opt_.dim, 0.0);
        for (int id : ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= opt_.vocab_size) {
                throw std::runtime_error("token id out of range");
            }
            for (std::size_t c = 0; c < opt_.dim; ++c) {
                u[c] += table_.matrix(id, static_cast<Eigen::Index>(c));
            }
        }
        for (auto& x : u) {
            x /= static_cast<double>(ids.size());
        }
        return u;
    }

    json dispatch(const json& req) {
        const std::string op = req.value("op", "");
        if (op == "info") {
            return {{"dim", opt_.dim}, {"vocab_size", opt_.vocab_size}, {"version", opt_.version}};
        }
        if (op == "set_queries") {
            if (opt_.mode == "oom") {
                throw std::runtime_error("CUDA out of memory while encoding queries");
            }
            std::vector<double> mean(opt_.dim, 0.0);
            const auto texts = req.at("texts").get<std::vector<std::string>>();
            if (texts.empty()) {
                throw std::runtime_error("no texts");
            }
            for (const auto& t : texts) {
                std::istringstream in(t);
                std::vector<int> ids;
                int id;
                while (in >> id) {
                    ids.push_back(id);
                }
                auto q = pool(ids);
                for (std::size_t c = 0; c < opt_.dim; ++c) {
                    mean[c] += q[c] / static_cast<double>(texts.size());
                }
            }
            const std::string handle = "qs-" + std::to_string(handles_.size());
            handles_[handle] = mean;
            return {{"handle", handle}};
        }
        if (op == "encode_passages") {
            const auto batch = req.at("token_ids").get<std::vector<std::vector<int>>>();
            std::vector<float> data;
            for (const auto& ids : batch) {
                for (double x : pool(ids)) {
                    data.push_back(static_cast<float>(x));
                }
            }
            if (opt_.mode == "short-payload" && !data.empty()) {
                // Re-encode one byte short.
                std::string raw(data.size() * 4 - 1, '\0');
                std::memcpy(raw.data(), data.data(), raw.size());
                std::string out(4 * ((raw.size() + 2) / 3) + 1, '\0');
                int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                        reinterpret_cast<const unsigned char*>(raw.data()),
                                        static_cast<int>(raw.size()));
                out.resize(static_cast<std::size_t>(n));
                return {{"shape", {batch.size(), opt_.dim}}, {"data", out}};
            }
            return {{"shape", {batch.size(), opt_.dim}}, {"data", b64(data)}};
        }
        if (op == "loss_and_grad") {
            const auto ids = req.at("token_ids").get<std::vector<int>>();
            auto it = handles_.find(req.at("handle").get<std::string>());
            if (it == handles_.end()) {
                throw std::runtime_error("unknown handle " + req.at("handle").get<std::string>());
            }
            const auto& mean = it->second;
            const auto u = pool(ids);
            double loss = 0.0;
            for (std::size_t c = 0; c < opt_.dim; ++c) {
                loss -= mean[c] * u[c];
            }
            const std::size_t rows = ids.size() + (opt_.mode == "bad-shape" ? 1 : 0);
            std::vector<float> grad;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < opt_.dim; ++c) {
                    grad.push_back(static_cast<float>(-mean[c] / static_cast<double>(ids.size())));
                }
            }
            return {{"loss", loss}, {"shape", {rows, opt_.dim}}, {"data", b64(grad)}};
        }
        if (op == "shutdown") {
            done_ = true;
            return json::object();
        }
        throw std::runtime_error("unknown op '" + op + "'");
    }

    Options opt_;
    aggd::EmbeddingTable table_;
    std::map<std::string, std::vector<double>> handles_;
    bool done_ = false;
};

void
serve(Server& server, LineIo& io, const std::string& mode) {
    for (;;) {
        auto first = io.read_line(-1);
        if (mode == "silent") {
            continue;
        }
        if (mode == "garbage") {
            io.write_line("this is not json");
            continue;
        }
        std::vector<std::string> lines{*first};
        if (mode == "reverse") {
            // Collect whatever else is already queued, then answer backwards.
            while (auto more = io.read_line(50)) {
                lines.push_back(*more);
            }
            std::reverse(lines.begin(), lines.end());
        }
        for (const auto& line : lines) {
            if (auto resp = server.handle(line)) {
                io.write_line(resp->dump());
            }
            if (server.done()) {
                return;
            }
        }
    }
}

}  // namespace

int
main(int argc, char** argv) {
    Options opt;
    CLI::App app{"reference bridge server for tests"};
    app.add_option("--dim", opt.dim);
    app.add_option("--vocab-size", opt.vocab_size);
    app.add_option("--seed", opt.seed);
    app.add_option("--version", opt.version);
    app.add_option("--mode", opt.mode)
        ->check(CLI::IsMember({"normal", "silent", "reverse", "short-payload", "bad-shape", "oom", "garbage"}));
    app.add_flag("--tcp", opt.tcp, "listen on an ephemeral localhost port and print it first");
    CLI11_PARSE(app, argc, argv);

    Server server(opt);
    try {
        if (!opt.tcp) {
            LineIo io(0, 1);
            serve(server, io, opt.mode);
            return 0;
        }
        int ls = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        if (::bind(ls, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(ls, 1) != 0) {
            std::perror("bind");
            return 1;
        }
        socklen_t len = sizeof(addr);
        ::getsockname(ls, reinterpret_cast<sockaddr*>(&addr), &len);
        std::printf("%u\n", static_cast<unsigned>(ntohs(addr.sin_port)));
        std::fflush(stdout);
        int conn = ::accept(ls, nullptr, nullptr);
        ::close(ls);
        LineIo io(conn, conn);
        serve(server, io, opt.mode);
        ::close(conn);
    } catch (const std::exception&) {
        // Client went away.
    }
    return 0;
}
