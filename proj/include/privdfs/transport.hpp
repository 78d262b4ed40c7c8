#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "privdfs/model.hpp"
#include "privdfs/wire.hpp"

namespace privdfs {

struct ClusterConfig {
    std::vector<std::string> servers;  // host:port, one per branch, in order
    int timeout_ms = 5000;
    int retries = 1;

    void validate(int n) const {
        require(static_cast<int>(servers.size()) == n,
                "ClusterConfig: address count must equal N");
        for (std::size_t i = 0; i < servers.size(); ++i)
            for (std::size_t j = i + 1; j < servers.size(); ++j)
                require(servers[i] != servers[j],
                        "ClusterConfig: duplicate server addresses");
    }
};

class TransportError : public std::runtime_error {
  public:
    TransportError(int branch, const std::string& what)
        : std::runtime_error("branch " + std::to_string(branch) + ": " + what),
          branch_id(branch) {}
    int branch_id;
};

namespace net {

inline std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

inline bool read_exact(int fd, std::uint8_t* buf, std::size_t n,
                       std::int64_t deadline_ms) {
    std::size_t got = 0;
    while (got < n) {
        const std::int64_t remain = deadline_ms - now_ms();
        if (remain <= 0) return false;
        pollfd pfd{fd, POLLIN, 0};
        const int pr = ::poll(&pfd, 1, static_cast<int>(remain));
        if (pr <= 0) return false;
        const ssize_t r = ::recv(fd, buf + got, n - got, 0);
        if (r <= 0) return false;
        got += static_cast<std::size_t>(r);
    }
    return true;
}

inline bool write_all(int fd, const std::uint8_t* buf, std::size_t n) {
    std::size_t sent = 0;
    while (sent < n) {
        const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
        if (r <= 0) return false;
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

// Reads one frame (header + body). Returns a WireError; the raw frame is
// assembled into `frame` for decode_message.
inline WireError read_frame(int fd, std::vector<std::uint8_t>& frame,
                            std::int64_t deadline_ms,
                            std::uint32_t max_body = 64u << 20) {
    frame.resize(10);
    if (!read_exact(fd, frame.data(), 10, deadline_ms)) return WireError::Truncated;
    if (std::memcmp(frame.data(), kWireMagic, 4) != 0) return WireError::BadMagic;
    if (frame[4] != kWireVersion) return WireError::UnknownVersion;
    std::uint32_t body_len = 0;
    for (int i = 0; i < 4; ++i)
        body_len |= static_cast<std::uint32_t>(frame[6 + i]) << (8 * i);
    if (body_len > max_body) return WireError::Oversize;
    frame.resize(10 + body_len);
    if (body_len > 0 &&
        !read_exact(fd, frame.data() + 10, body_len, deadline_ms))
        return WireError::Truncated;
    return WireError::Ok;
}

inline int connect_to(const std::string& hostport, int timeout_ms) {
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos) return -1;
    const std::string host = hostport.substr(0, colon);
    const std::string port = hostport.substr(colon + 1);

    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) return -1;
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_NONBLOCK,
                      ai->ai_protocol);
        if (fd < 0) continue;
        const int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc == 0) break;
        if (errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            if (::poll(&pfd, 1, timeout_ms) == 1) {
                int err = 0;
                socklen_t len = sizeof(err);
                ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                if (err == 0) break;
            }
        }
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd >= 0) {
        // back to blocking writes; reads are poll-driven anyway
        const int fl = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, fl & ~O_NONBLOCK);
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    return fd;
}

}  // namespace net

// One branch daemon: runs the branch forward on every INFER_REQ and replies
// with the embedding. Shares are never persisted and the server opens no
// outbound connections.
class BranchServer {
  public:
    BranchServer(BranchNet branch, int branch_id, std::uint64_t server_id = 0,
                 std::size_t max_tensor_values = 1u << 22)
        : branch_(std::move(branch)), branch_id_(branch_id),
          server_id_(server_id), max_tensor_(max_tensor_values) {}

    ~BranchServer() { stop(); }

    // Binds and starts accepting. port 0 picks an ephemeral port.
    void start(const std::string& host = "127.0.0.1", int port = 0) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        require(listen_fd_ >= 0, "BranchServer: socket failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
        require(::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr),
                       sizeof(addr)) == 0,
                "BranchServer: bind failed");
        require(::listen(listen_fd_, 16) == 0, "BranchServer: listen failed");
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        running_ = true;
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    void stop() {
        if (!running_.exchange(false)) return;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (accept_thread_.joinable()) accept_thread_.join();
        std::lock_guard<std::mutex> lk(workers_mu_);
        for (auto& t : workers_)
            if (t.joinable()) t.join();
        workers_.clear();
    }

    int port() const { return port_; }

  private:
    void accept_loop() {
        while (running_) {
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (!running_) break;
                continue;
            }
            std::lock_guard<std::mutex> lk(workers_mu_);
            workers_.emplace_back([this, fd] { serve_connection(fd); });
        }
    }

    void send_err(int fd, std::uint16_t code, const std::string& msg) {
        ErrMsg e{code, msg};
        auto frame = encode_message(WireMessage{e});
        net::write_all(fd, frame.data(), frame.size());
    }

    void serve_connection(int fd) {
        std::vector<std::uint8_t> frame;
        while (running_) {
            const WireError fe =
                net::read_frame(fd, frame, net::now_ms() + 60000);
            if (fe == WireError::Truncated && frame.size() == 10) break;  // EOF-ish
            if (fe != WireError::Ok) {
                send_err(fd, static_cast<std::uint16_t>(fe), wire_error_name(fe));
                break;
            }
            WireMessage msg;
            const WireError de =
                decode_message(frame.data(), frame.size(), msg, max_tensor_);
            if (de != WireError::Ok) {
                send_err(fd, static_cast<std::uint16_t>(de), wire_error_name(de));
                break;
            }
            if (const auto* hello = std::get_if<HelloMsg>(&msg)) {
                (void)hello;
                HelloMsg resp{server_id_, static_cast<std::uint8_t>(branch_id_)};
                auto out = encode_message(WireMessage{resp});
                if (!net::write_all(fd, out.data(), out.size())) break;
                continue;
            }
            const auto* req = std::get_if<InferReqMsg>(&msg);
            if (!req) {
                send_err(fd, kErrBadRequest, "unexpected message type");
                break;
            }
            if (req->tensor.channels != branch_.c1.in_c) {
                send_err(fd, kErrBadRequest, "share channel count mismatch");
                continue;
            }
            InferRespMsg resp;
            resp.request_id = req->request_id;
            resp.embedding = branch_forward(branch_, req->tensor);
            auto out = encode_message(WireMessage{resp});
            if (!net::write_all(fd, out.data(), out.size())) break;
        }
        ::close(fd);
    }

    BranchNet branch_;
    int branch_id_;
    std::uint64_t server_id_;
    std::size_t max_tensor_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex workers_mu_;
    std::vector<std::thread> workers_;
};

// Client-side distributed inference: encoder + DFS locally, concurrent
// fan-out of one share per server, join-all under a shared deadline, fusion
// locally. No partial-result fallback.
inline std::vector<float> client_infer(const ModelBundle& m, const FeatureMap& x,
                                       int policy_idx, std::uint64_t nonce,
                                       const ClusterConfig& cluster,
                                       std::uint64_t request_id = 1) {
    const int n = m.cfg.num_branches;
    cluster.validate(n);
    const DfsPolicy& policy = m.family.policies.at(policy_idx);
    FeatureMap z = m.encoder.forward(x);
    std::vector<Share> shares = dfs_forward(z, policy, m.cfg, nonce);

    std::vector<std::vector<float>> embeddings(n);
    std::vector<std::string> errors(n);
    std::vector<std::thread> threads;
    const std::int64_t deadline = net::now_ms() + cluster.timeout_ms;

    for (int b = 0; b < n; ++b) {
        threads.emplace_back([&, b] {
            for (int attempt = 0; attempt <= cluster.retries; ++attempt) {
                errors[b].clear();
                const int fd =
                    net::connect_to(cluster.servers[b], cluster.timeout_ms);
                if (fd < 0) {
                    errors[b] = "connect failed";
                    continue;
                }
                InferReqMsg req;
                req.request_id = request_id;
                req.policy_id = policy.policy_id;
                req.branch_id = static_cast<std::uint8_t>(b);
                req.tensor = shares[b].features;
                auto frame = encode_message(WireMessage{req});
                if (!net::write_all(fd, frame.data(), frame.size())) {
                    errors[b] = "send failed";
                    ::close(fd);
                    continue;
                }
                std::vector<std::uint8_t> resp_frame;
                const WireError fe = net::read_frame(fd, resp_frame, deadline);
                ::close(fd);
                if (fe != WireError::Ok) {
                    errors[b] = std::string("recv: ") + wire_error_name(fe);
                    if (net::now_ms() >= deadline) break;
                    continue;
                }
                WireMessage msg;
                if (decode_message(resp_frame.data(), resp_frame.size(), msg) !=
                    WireError::Ok) {
                    errors[b] = "bad response frame";
                    continue;
                }
                if (const auto* err = std::get_if<ErrMsg>(&msg)) {
                    errors[b] = "server error " + std::to_string(err->code) +
                                ": " + err->message;
                    continue;
                }
                const auto* resp = std::get_if<InferRespMsg>(&msg);
                if (!resp || resp->request_id != request_id) {
                    errors[b] = "response id mismatch";
                    continue;
                }
                embeddings[b] = resp->embedding;
                return;
            }
        });
    }
    for (auto& t : threads) t.join();
    for (int b = 0; b < n; ++b) {
        if (embeddings[b].empty())
            throw TransportError(b, errors[b].empty() ? "timeout" : errors[b]);
    }
    std::vector<float> concat;
    concat.reserve(static_cast<std::size_t>(n) * m.arch.emb_dim);
    for (auto& e : embeddings) concat.insert(concat.end(), e.begin(), e.end());
    return fuse_embeddings(m, concat);
}

// In-process simulator with identical semantics plus a connection ledger.
struct SimLedgerEntry {
    std::string sender;
    std::string receiver;
    int share_channels = 0;  // 0 for response messages
};

struct Simulator {
    const ModelBundle* bundle = nullptr;
    std::vector<SimLedgerEntry> ledger;

    explicit Simulator(const ModelBundle& m) : bundle(&m) {}

    std::vector<float> infer(const FeatureMap& x, int policy_idx,
                             std::uint64_t nonce) {
        const ModelBundle& m = *bundle;
        const DfsPolicy& policy = m.family.policies.at(policy_idx);
        FeatureMap z = m.encoder.forward(x);
        std::vector<Share> shares = dfs_forward(z, policy, m.cfg, nonce);
        std::vector<float> concat;
        for (int b = 0; b < m.cfg.num_branches; ++b) {
            const std::string server = "server" + std::to_string(b);
            ledger.push_back({"client", server, shares[b].features.channels});
            std::vector<float> emb = branch_forward(m.branches[b], shares[b].features);
            ledger.push_back({server, "client", 0});
            concat.insert(concat.end(), emb.begin(), emb.end());
        }
        return fuse_embeddings(m, concat);
    }

    int server_to_server_messages() const {
        int count = 0;
        for (const auto& e : ledger)
            if (e.sender != "client" && e.receiver != "client") ++count;
        return count;
    }
};

}  // namespace privdfs
