// SPDX-License-Identifier: Apache-2.0

#include "agribot/broker.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace agri::broker {

bool NodeSession::subscribed(int pin) const {
    return std::find(sub.pins.begin(), sub.pins.end(), pin) != sub.pins.end();
}

std::vector<const NodeSession*> ProjectRegistry::live(const std::string& token) const {
    std::vector<const NodeSession*> out;
    for (const auto& [id, s] : sessions) {
        if (s.authed && s.token == token) {
            out.push_back(&s);
        }
    }
    return out;
}

AuthResult authenticate(NodeSession sess, const proto::Auth& frame, ProjectRegistry& reg) {
    if (sess.authed) {
        return {std::move(sess), proto::Err{code::already_authed}};
    }
    if (!reg.tokens.contains(frame.token)) {
        return {std::move(sess), proto::Err{code::auth_failed}};
    }
    for (const NodeSession* other : reg.live(frame.token)) {
        if (other->node_id == frame.node && other->id != sess.id) {
            return {std::move(sess), proto::Err{code::duplicate_node}};
        }
    }
    sess.authed = true;
    sess.node_id = frame.node;
    sess.token = frame.token;
    sess.sub = frame.sub;
    reg.sessions[sess.id] = sess;
    return {std::move(sess), proto::Ok{}};
}

std::vector<Delivery> route(const proto::Frame& frame, const NodeSession& from, const ProjectRegistry& reg) {
    std::vector<Delivery> out;
    if (!from.authed) {
        out.push_back({from.id, proto::Err{code::not_authed}});
        return out;
    }
    const auto peers = reg.live(from.token);
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, proto::VirtualWrite>) {
                for (const NodeSession* s : peers) {
                    if (s->id != from.id && s->subscribed(f.pin)) {
                        out.push_back({s->id, frame});
                    }
                }
            } else if constexpr (std::is_same_v<T, proto::TelemetryFrame>) {
                for (const NodeSession* s : peers) {
                    if (s->id != from.id && s->sub.tele) {
                        out.push_back({s->id, frame});
                    }
                }
            } else if constexpr (std::is_same_v<T, proto::Bridge>) {
                auto it = std::find_if(peers.begin(), peers.end(),
                                       [&](const NodeSession* s) { return s->node_id == f.dst; });
                if (it == peers.end()) {
                    out.push_back({from.id, proto::Err{code::no_route}});
                } else {
                    out.push_back({(*it)->id, frame});
                }
            } else if constexpr (std::is_same_v<T, proto::Notify>) {
                for (const NodeSession* s : peers) {
                    if (s->id != from.id) {
                        out.push_back({s->id, frame});
                    }
                }
            } else if constexpr (std::is_same_v<T, proto::Auth>) {
                out.push_back({from.id, proto::Err{code::already_authed}});
            }
            // ok/err from a client carry nothing to route.
        },
        frame);
    return out;
}

Broker::Broker(std::set<std::string> tokens) {
    for (const std::string& t : tokens) {
        token_mu_.emplace(t, std::make_unique<std::mutex>());
    }
    reg_.tokens = std::move(tokens);
}

SessionId Broker::connect(Sink sink) {
    std::unique_lock lock(reg_mu_);
    const SessionId id = next_id_++;
    reg_.sessions[id] = NodeSession{id, {}, {}, false, {}};
    sinks_[id] = std::move(sink);
    return id;
}

void Broker::disconnect(SessionId id) {
    std::string token;
    {
        std::shared_lock lock(reg_mu_);
        auto it = reg_.sessions.find(id);
        if (it == reg_.sessions.end()) {
            return;
        }
        token = it->second.token;
    }
    // Take the token lock so no routing pass is midway through this session's sink.
    std::unique_lock<std::mutex> tl;
    if (!token.empty()) {
        tl = std::unique_lock(token_mutex(token));
    }
    std::unique_lock lock(reg_mu_);
    reg_.sessions.erase(id);
    sinks_.erase(id);
}

std::size_t Broker::session_count() const {
    std::shared_lock lock(reg_mu_);
    return reg_.sessions.size();
}

std::mutex& Broker::token_mutex(const std::string& token) {
    return *token_mu_.at(token);
}

void Broker::send_to(SessionId id, const proto::Frame& f) {
    Sink sink;
    {
        std::shared_lock lock(reg_mu_);
        auto it = sinks_.find(id);
        if (it == sinks_.end()) {
            return;
        }
        sink = it->second;
    }
    sink(proto::encode_frame(f));
}

void Broker::reject(SessionId to, const std::string& code) {
    send_to(to, proto::Err{code});
}

void Broker::receive(SessionId from, std::string_view line) {
    proto::Frame frame;
    try {
        frame = proto::parse_frame(line);
    } catch (const proto::ProtocolError& e) {
        reject(from, e.code());
        return;
    }

    NodeSession sender;
    {
        std::shared_lock lock(reg_mu_);
        auto it = reg_.sessions.find(from);
        if (it == reg_.sessions.end()) {
            return;
        }
        sender = it->second;
    }

    if (!sender.authed) {
        if (const auto* auth = std::get_if<proto::Auth>(&frame)) {
            proto::Frame reply;
            {
                std::unique_lock lock(reg_mu_);
                reply = authenticate(sender, *auth, reg_).reply;
            }
            send_to(from, reply);
        } else {
            reject(from, code::not_authed);
        }
        return;
    }

    // One routing pass at a time per token gives every recipient the same
    // global order of that token's traffic.
    std::lock_guard token_lock(token_mutex(sender.token));
    std::vector<std::pair<Sink, std::string>> out;
    {
        std::shared_lock lock(reg_mu_);
        for (Delivery& d : route(frame, sender, reg_)) {
            auto it = sinks_.find(d.to);
            if (it != sinks_.end()) {
                out.emplace_back(it->second, proto::encode_frame(d.frame));
            }
        }
    }
    for (auto& [sink, encoded] : out) {
        sink(std::move(encoded));
    }
}

std::set<std::string> load_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read token file " + path);
    }
    std::set<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        const auto last = line.find_last_not_of(" \t\r");
        tokens.insert(line.substr(first, last - first + 1));
    }
    return tokens;
}

} // namespace agri::broker
