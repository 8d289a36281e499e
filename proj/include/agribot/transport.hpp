// SPDX-License-Identifier: Apache-2.0

// Network transports for the broker: a newline-delimited TCP listener and a
// WebSocket endpoint at /ws carrying the same frames, plus blocking clients.

#ifndef AGRIBOT_TRANSPORT_HPP
#define AGRIBOT_TRANSPORT_HPP

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "agribot/broker.hpp"
#include "agribot/protocol.hpp"

namespace agri::net {

inline constexpr std::size_t kMaxLineBytes = 64 * 1024;

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

/// Parses "host:port" (or ":port"). Throws std::invalid_argument.
[[nodiscard]] Endpoint parse_endpoint(const std::string& text);
[[nodiscard]] std::string to_string(const Endpoint& e);

/// Splits a byte stream into lines, enforcing kMaxLineBytes. An over-long
/// line is dropped up to its newline and reported once.
class LineSplitter {
public:
    struct Output {
        std::vector<std::string> lines;
        std::size_t overflows = 0;
    };
    Output feed(std::string_view bytes);

private:
    std::string pending_;
    bool discarding_ = false;
};

/// Serves a Broker over TCP and (optionally) WebSocket on background threads.
class BrokerServer {
public:
    BrokerServer(broker::Broker& broker, const Endpoint& tcp, const std::optional<Endpoint>& ws,
                 unsigned threads = 2);
    ~BrokerServer();
    BrokerServer(const BrokerServer&) = delete;
    BrokerServer& operator=(const BrokerServer&) = delete;

    [[nodiscard]] std::uint16_t tcp_port() const;
    [[nodiscard]] std::uint16_t ws_port() const;

    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Thread-safe FIFO with a timed wait.
template <typename T>
class BlockingQueue {
public:
    void push(T v) {
        {
            std::lock_guard lock(mu_);
            q_.push_back(std::move(v));
        }
        cv_.notify_one();
    }

    std::optional<T> pop(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        if (!cv_.wait_for(lock, timeout, [&] { return !q_.empty() || closed_; }) || q_.empty()) {
            return std::nullopt;
        }
        T v = std::move(q_.front());
        q_.pop_front();
        return v;
    }

    std::optional<T> try_pop() {
        std::lock_guard lock(mu_);
        if (q_.empty()) {
            return std::nullopt;
        }
        T v = std::move(q_.front());
        q_.pop_front();
        return v;
    }

    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    [[nodiscard]] bool closed() const {
        std::lock_guard lock(mu_);
        return closed_;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> q_;
    bool closed_ = false;
};

/// Blocking newline-framed TCP client. A reader thread queues inbound lines.
class TcpClient {
public:
    explicit TcpClient(const Endpoint& ep);
    ~TcpClient();
    TcpClient(const TcpClient&) = delete;
    TcpClient& operator=(const TcpClient&) = delete;

    void send_line(std::string line);
    void send(const proto::Frame& f) { send_line(proto::encode_frame(f)); }

    /// Next inbound line (without the newline), or nullopt on timeout/close.
    std::optional<std::string> receive(std::chrono::milliseconds timeout);
    [[nodiscard]] bool connected() const;
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Blocking WebSocket client (one frame per message). Used by tests and tools.
class WsClient {
public:
    WsClient(const Endpoint& ep, const std::string& path = "/ws");
    ~WsClient();
    WsClient(const WsClient&) = delete;
    WsClient& operator=(const WsClient&) = delete;

    void send_text(const std::string& text);
    void send(const proto::Frame& f) { send_text(proto::encode_frame(f)); }
    std::optional<std::string> receive(std::chrono::milliseconds timeout);
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Sends auth and waits for the reply. Returns the reply frame.
proto::Frame authenticate(TcpClient& client, const proto::Auth& auth,
                          std::chrono::milliseconds timeout = std::chrono::seconds(5));

} // namespace agri::net

#endif // AGRIBOT_TRANSPORT_HPP
