// SPDX-License-Identifier: Apache-2.0

#include "agribot/transport.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <stdexcept>

namespace agri::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

Endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("expected host:port, got '" + text + "'");
    }
    Endpoint ep;
    if (colon > 0) {
        ep.host = text.substr(0, colon);
    }
    try {
        const int port = std::stoi(text.substr(colon + 1));
        if (port < 0 || port > 65535) {
            throw std::out_of_range("port");
        }
        ep.port = static_cast<std::uint16_t>(port);
    } catch (const std::logic_error&) {
        throw std::invalid_argument("bad port in '" + text + "'");
    }
    return ep;
}

std::string to_string(const Endpoint& e) {
    return e.host + ":" + std::to_string(e.port);
}

LineSplitter::Output LineSplitter::feed(std::string_view bytes) {
    Output out;
    for (char c : bytes) {
        if (c == '\n') {
            if (discarding_) {
                discarding_ = false;
            } else {
                out.lines.push_back(std::move(pending_));
            }
            pending_.clear();
            continue;
        }
        if (discarding_) {
            continue;
        }
        pending_.push_back(c);
        if (pending_.size() > kMaxLineBytes) {
            pending_.clear();
            discarding_ = true;
            ++out.overflows;
        }
    }
    return out;
}

namespace {

tcp::endpoint resolve(asio::io_context& ioc, const Endpoint& ep) {
    tcp::resolver resolver(ioc);
    auto results = resolver.resolve(ep.host, std::to_string(ep.port));
    if (results.empty()) {
        throw std::runtime_error("cannot resolve " + to_string(ep));
    }
    return *results.begin();
}

class Session {
public:
    virtual ~Session() = default;
    virtual void close() = 0;
};

class TcpSession final : public Session, public std::enable_shared_from_this<TcpSession> {
public:
    TcpSession(tcp::socket sock, broker::Broker& broker) : sock_(std::move(sock)), broker_(broker) {}

    void start() {
        std::weak_ptr<TcpSession> weak = weak_from_this();
        id_ = broker_.connect([weak](std::string line) {
            if (auto self = weak.lock()) {
                self->deliver(std::move(line));
            }
        });
        read();
    }

    void close() override {
        asio::post(sock_.get_executor(), [self = shared_from_this()] { self->shutdown(); });
    }

private:
    void deliver(std::string line) {
        asio::post(sock_.get_executor(), [self = shared_from_this(), line = std::move(line)]() mutable {
            self->outq_.push_back(std::move(line));
            if (self->outq_.size() == 1) {
                self->write();
            }
        });
    }

    void read() {
        sock_.async_read_some(asio::buffer(buf_), [self = shared_from_this()](beast::error_code ec, std::size_t n) {
            if (ec) {
                self->shutdown();
                return;
            }
            auto out = self->splitter_.feed({self->buf_.data(), n});
            for (std::size_t i = 0; i < out.overflows; ++i) {
                self->broker_.reject(self->id_, broker::code::line_too_long);
            }
            for (const std::string& line : out.lines) {
                self->broker_.receive(self->id_, line);
            }
            self->read();
        });
    }

    void write() {
        if (closed_) {
            outq_.clear();
            return;
        }
        asio::async_write(sock_, asio::buffer(outq_.front()),
                          [self = shared_from_this()](beast::error_code ec, std::size_t) {
                              if (ec) {
                                  self->shutdown();
                                  return;
                              }
                              self->outq_.pop_front();
                              if (!self->outq_.empty()) {
                                  self->write();
                              }
                          });
    }

    void shutdown() {
        if (closed_) {
            return;
        }
        closed_ = true;
        broker_.disconnect(id_);
        beast::error_code ec;
        sock_.shutdown(tcp::socket::shutdown_both, ec);
        sock_.close(ec);
    }

    tcp::socket sock_;
    broker::Broker& broker_;
    broker::SessionId id_ = 0;
    std::array<char, 4096> buf_{};
    LineSplitter splitter_;
    std::deque<std::string> outq_;
    bool closed_ = false;
};

class WsSession final : public Session, public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket sock, broker::Broker& broker) : ws_(std::move(sock)), broker_(broker) {}

    void start() {
        http::async_read(ws_.next_layer(), buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                return;
            }
            self->on_request();
        });
    }

    void close() override {
        asio::post(ws_.get_executor(), [self = shared_from_this()] { self->shutdown(); });
    }

private:
    void on_request() {
        if (!websocket::is_upgrade(req_) || req_.target() != "/ws") {
            auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, req_.version());
            res->set(http::field::content_type, "text/plain");
            res->body() = "websocket endpoint is /ws\n";
            res->prepare_payload();
            http::async_write(ws_.next_layer(), *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
                beast::error_code ec;
                self->ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
            });
            return;
        }
        ws_.read_message_max(kMaxLineBytes);
        ws_.async_accept(req_, [self = shared_from_this()](beast::error_code ec) {
            if (ec) {
                return;
            }
            self->buf_.clear();
            std::weak_ptr<WsSession> weak = self;
            self->id_ = self->broker_.connect([weak](std::string line) {
                if (auto s = weak.lock()) {
                    s->deliver(std::move(line));
                }
            });
            self->registered_ = true;
            self->read();
        });
    }

    void deliver(std::string line) {
        if (!line.empty() && line.back() == '\n') {
            line.pop_back();
        }
        asio::post(ws_.get_executor(), [self = shared_from_this(), line = std::move(line)]() mutable {
            self->outq_.push_back(std::move(line));
            if (self->outq_.size() == 1) {
                self->write();
            }
        });
    }

    void read() {
        ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                if (ec == websocket::error::message_too_big) {
                    self->broker_.reject(self->id_, broker::code::line_too_long);
                }
                self->shutdown();
                return;
            }
            std::string text = beast::buffers_to_string(self->buf_.data());
            self->buf_.consume(self->buf_.size());
            if (text.empty() || text.back() != '\n') {
                text.push_back('\n');
            }
            auto out = self->splitter_.feed(text);
            for (const std::string& line : out.lines) {
                self->broker_.receive(self->id_, line);
            }
            self->read();
        });
    }

    void write() {
        if (closed_) {
            outq_.clear();
            return;
        }
        ws_.text(true);
        ws_.async_write(asio::buffer(outq_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->shutdown();
                return;
            }
            self->outq_.pop_front();
            if (!self->outq_.empty()) {
                self->write();
            }
        });
    }

    void shutdown() {
        if (closed_) {
            return;
        }
        closed_ = true;
        if (registered_) {
            broker_.disconnect(id_);
        }
        beast::error_code ec;
        ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
        ws_.next_layer().close(ec);
    }

    websocket::stream<tcp::socket> ws_;
    broker::Broker& broker_;
    broker::SessionId id_ = 0;
    bool registered_ = false;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
    LineSplitter splitter_;
    std::deque<std::string> outq_;
    bool closed_ = false;
};

} // namespace

struct BrokerServer::Impl {
    broker::Broker& broker;
    asio::io_context ioc;
    asio::executor_work_guard<asio::io_context::executor_type> work{ioc.get_executor()};
    tcp::acceptor tcp_acceptor{ioc};
    std::optional<tcp::acceptor> ws_acceptor;
    std::vector<std::thread> threads;
    std::mutex sessions_mu;
    std::vector<std::weak_ptr<Session>> sessions;
    std::atomic<bool> stopped{false};

    explicit Impl(broker::Broker& b) : broker(b) {}

    void listen(tcp::acceptor& acc, const Endpoint& ep) {
        const tcp::endpoint endpoint = resolve(ioc, ep);
        acc.open(endpoint.protocol());
        acc.set_option(asio::socket_base::reuse_address(true));
        acc.bind(endpoint);
        acc.listen(asio::socket_base::max_listen_connections);
    }

    void track(const std::shared_ptr<Session>& s) {
        std::lock_guard lock(sessions_mu);
        std::erase_if(sessions, [](const auto& w) { return w.expired(); });
        sessions.push_back(s);
    }

    void accept_tcp() {
        tcp_acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket sock) {
            if (ec) {
                return;
            }
            sock.set_option(tcp::no_delay(true));
            auto s = std::make_shared<TcpSession>(std::move(sock), broker);
            track(s);
            s->start();
            accept_tcp();
        });
    }

    void accept_ws() {
        ws_acceptor->async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket sock) {
            if (ec) {
                return;
            }
            sock.set_option(tcp::no_delay(true));
            auto s = std::make_shared<WsSession>(std::move(sock), broker);
            track(s);
            s->start();
            accept_ws();
        });
    }
};

BrokerServer::BrokerServer(broker::Broker& broker, const Endpoint& tcp_ep, const std::optional<Endpoint>& ws_ep,
                           unsigned threads)
    : impl_(std::make_unique<Impl>(broker)) {
    impl_->listen(impl_->tcp_acceptor, tcp_ep);
    impl_->accept_tcp();
    if (ws_ep) {
        impl_->ws_acceptor.emplace(impl_->ioc);
        impl_->listen(*impl_->ws_acceptor, *ws_ep);
        impl_->accept_ws();
    }
    for (unsigned i = 0; i < std::max(1u, threads); ++i) {
        impl_->threads.emplace_back([this] { impl_->ioc.run(); });
    }
}

BrokerServer::~BrokerServer() {
    stop();
}

std::uint16_t BrokerServer::tcp_port() const {
    return impl_->tcp_acceptor.local_endpoint().port();
}

std::uint16_t BrokerServer::ws_port() const {
    return impl_->ws_acceptor ? impl_->ws_acceptor->local_endpoint().port() : 0;
}

void BrokerServer::stop() {
    if (impl_->stopped.exchange(true)) {
        return;
    }
    asio::post(impl_->ioc, [this] {
        beast::error_code ec;
        impl_->tcp_acceptor.close(ec);
        if (impl_->ws_acceptor) {
            impl_->ws_acceptor->close(ec);
        }
    });
    {
        std::lock_guard lock(impl_->sessions_mu);
        for (auto& w : impl_->sessions) {
            if (auto s = w.lock()) {
                s->close();
            }
        }
    }
    impl_->work.reset();
    // Give queued shutdowns a moment, then force the loop down.
    asio::post(impl_->ioc, [this] { impl_->ioc.stop(); });
    for (std::thread& t : impl_->threads) {
        if (t.joinable()) {
            t.join();
        }
    }
}

// Clients ----------------------------------------------------------------------

struct TcpClient::Impl {
    asio::io_context ioc;
    tcp::socket sock{ioc};
    std::array<char, 4096> buf{};
    LineSplitter splitter;
    std::deque<std::string> inbox;
    bool reading = false;
    bool broken = false;

    void start_read() {
        if (reading || broken) {
            return;
        }
        reading = true;
        sock.async_read_some(asio::buffer(buf), [this](beast::error_code ec, std::size_t n) {
            reading = false;
            if (ec) {
                broken = true;
                return;
            }
            for (std::string& line : splitter.feed({buf.data(), n}).lines) {
                inbox.push_back(std::move(line));
            }
            start_read();
        });
    }
};

TcpClient::TcpClient(const Endpoint& ep) : impl_(std::make_unique<Impl>()) {
    impl_->sock.connect(resolve(impl_->ioc, ep));
    impl_->sock.set_option(tcp::no_delay(true));
    impl_->start_read();
}

TcpClient::~TcpClient() {
    close();
}

void TcpClient::send_line(std::string line) {
    if (line.empty() || line.back() != '\n') {
        line.push_back('\n');
    }
    beast::error_code ec;
    asio::write(impl_->sock, asio::buffer(line), ec);
    if (ec) {
        impl_->broken = true;
        throw std::runtime_error("send failed: " + ec.message());
    }
}

std::optional<std::string> TcpClient::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (impl_->inbox.empty() && !impl_->broken) {
        if (impl_->ioc.stopped()) {
            impl_->ioc.restart();
        }
        if (impl_->ioc.run_one_until(deadline) == 0 && std::chrono::steady_clock::now() >= deadline) {
            break;
        }
    }
    if (impl_->inbox.empty()) {
        return std::nullopt;
    }
    std::string line = std::move(impl_->inbox.front());
    impl_->inbox.pop_front();
    return line;
}

bool TcpClient::connected() const {
    return !impl_->broken && impl_->sock.is_open();
}

void TcpClient::close() {
    beast::error_code ec;
    impl_->sock.shutdown(tcp::socket::shutdown_both, ec);
    impl_->sock.close(ec);
    impl_->broken = true;
}

struct WsClient::Impl {
    asio::io_context ioc;
    websocket::stream<tcp::socket> ws{ioc};
    beast::flat_buffer buf;
    std::deque<std::string> inbox;
    bool reading = false;
    bool broken = false;

    void start_read() {
        if (reading || broken) {
            return;
        }
        reading = true;
        ws.async_read(buf, [this](beast::error_code ec, std::size_t) {
            reading = false;
            if (ec) {
                broken = true;
                return;
            }
            inbox.push_back(beast::buffers_to_string(buf.data()));
            buf.consume(buf.size());
            start_read();
        });
    }
};

WsClient::WsClient(const Endpoint& ep, const std::string& path) : impl_(std::make_unique<Impl>()) {
    impl_->ws.next_layer().connect(resolve(impl_->ioc, ep));
    impl_->ws.handshake(ep.host + ":" + std::to_string(ep.port), path);
    impl_->ws.text(true);
    impl_->start_read();
}

WsClient::~WsClient() {
    close();
}

void WsClient::send_text(const std::string& text) {
    bool done = false;
    beast::error_code result;
    const std::string payload = text;
    impl_->ws.async_write(asio::buffer(payload), [&](beast::error_code ec, std::size_t) {
        result = ec;
        done = true;
    });
    while (!done) {
        if (impl_->ioc.stopped()) {
            impl_->ioc.restart();
        }
        impl_->ioc.run_one();
    }
    if (result) {
        throw std::runtime_error("websocket send failed: " + result.message());
    }
}

std::optional<std::string> WsClient::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (impl_->inbox.empty() && !impl_->broken) {
        if (impl_->ioc.stopped()) {
            impl_->ioc.restart();
        }
        if (impl_->ioc.run_one_until(deadline) == 0 && std::chrono::steady_clock::now() >= deadline) {
            break;
        }
    }
    if (impl_->inbox.empty()) {
        return std::nullopt;
    }
    std::string msg = std::move(impl_->inbox.front());
    impl_->inbox.pop_front();
    return msg;
}

void WsClient::close() {
    beast::error_code ec;
    impl_->ws.next_layer().shutdown(tcp::socket::shutdown_both, ec);
    impl_->ws.next_layer().close(ec);
    impl_->broken = true;
}

proto::Frame authenticate(TcpClient& client, const proto::Auth& auth, std::chrono::milliseconds timeout) {
    client.send(auth);
    auto line = client.receive(timeout);
    if (!line) {
        throw std::runtime_error("no reply to auth");
    }
    return proto::parse_frame(*line);
}

} // namespace agri::net
