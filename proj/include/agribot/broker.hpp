// SPDX-License-Identifier: Apache-2.0

// Token-scoped message router. authenticate() and route() are the routing
// rules over a plain registry value; Broker wraps them with locking and
// per-session output sinks so any transport can drive it.

#ifndef AGRIBOT_BROKER_HPP
#define AGRIBOT_BROKER_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "agribot/protocol.hpp"

namespace agri::broker {

using SessionId = std::uint64_t;

struct NodeSession {
    SessionId id = 0;
    std::string node_id;
    std::string token;
    bool authed = false;
    proto::Subscription sub;

    [[nodiscard]] bool subscribed(int pin) const;
};

namespace code {
inline constexpr const char* auth_failed = "auth_failed";
inline constexpr const char* duplicate_node = "duplicate_node";
inline constexpr const char* not_authed = "not_authed";
inline constexpr const char* no_route = "no_route";
inline constexpr const char* already_authed = "already_authed";
inline constexpr const char* line_too_long = "line_too_long";
} // namespace code

struct ProjectRegistry {
    std::set<std::string> tokens;
    std::map<SessionId, NodeSession> sessions;

    /// Live, authenticated sessions on `token`, in connection order.
    [[nodiscard]] std::vector<const NodeSession*> live(const std::string& token) const;
};

struct Delivery {
    SessionId to;
    proto::Frame frame;
};

struct AuthResult {
    NodeSession session;
    proto::Frame reply; // Ok or Err
};

/// Checks the token and node id; on success the session is registered in `reg`.
[[nodiscard]] AuthResult authenticate(NodeSession sess, const proto::Auth& frame, ProjectRegistry& reg);

/// Recipients for a frame sent by `from`. Errors come back as deliveries to the sender.
[[nodiscard]] std::vector<Delivery> route(const proto::Frame& frame, const NodeSession& from,
                                          const ProjectRegistry& reg);

/// Thread-safe broker core. Transports call connect/receive/disconnect; the
/// broker pushes encoded lines into each session's sink. Sinks must not block.
class Broker {
public:
    using Sink = std::function<void(std::string line)>;

    explicit Broker(std::set<std::string> tokens);

    SessionId connect(Sink sink);
    void disconnect(SessionId id);

    /// Handles one inbound line from `from`.
    void receive(SessionId from, std::string_view line);

    /// Replies with an err frame without parsing (transport-level rejects).
    void reject(SessionId to, const std::string& code);

    [[nodiscard]] std::size_t session_count() const;

private:
    void send_to(SessionId id, const proto::Frame& f);
    std::mutex& token_mutex(const std::string& token);

    mutable std::shared_mutex reg_mu_;
    ProjectRegistry reg_;
    std::map<SessionId, Sink> sinks_;
    SessionId next_id_ = 1;
    std::map<std::string, std::unique_ptr<std::mutex>> token_mu_;
};

/// Reads a token file: one token per line, blank lines and '#' comments ignored.
[[nodiscard]] std::set<std::string> load_tokens(const std::string& path);

} // namespace agri::broker

#endif // AGRIBOT_BROKER_HPP
