// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <exception>
#include <sstream>
#include <thread>

#include "agribot/harness.hpp"
#include "agribot/transport.hpp"

namespace agri::harness {

using nlohmann::ordered_json;
using namespace std::chrono_literals;

namespace {

constexpr auto kNetTimeout = 10s;

RunLog merge(std::vector<LogRecord> bot, std::vector<LogRecord> ctl) {
    RunLog log;
    log.records = std::move(bot);
    log.records.insert(log.records.end(), std::make_move_iterator(ctl.begin()), std::make_move_iterator(ctl.end()));
    std::stable_sort(log.records.begin(), log.records.end(), [](const LogRecord& a, const LogRecord& b) {
        if (a.tick != b.tick) {
            return a.tick < b.tick;
        }
        return static_cast<int>(a.source) < static_cast<int>(b.source);
    });
    return log;
}

void run_ticks(const ScenarioConfig& cfg, BotNode& bot, const std::function<void()>& between,
               std::chrono::milliseconds timeout) {
    const std::int64_t n = cfg.ticks();
    for (std::int64_t k = 0; k < n; ++k) {
        bot.tick(k);
        between();
        if (!bot.await_ack(k, timeout)) {
            throw RunError(k, "controller", "controller is not attached");
        }
    }
    bot.finish();
}

RunLog run_inproc(const ScenarioConfig& cfg, const Observer& observer) {
    broker::Broker b({cfg.broker.token});
    LoopbackLink ctl_link(b);
    LoopbackLink bot_link(b);
    try {
        handshake(ctl_link, controller_auth(cfg.broker.token));
        handshake(bot_link, bot_auth(cfg.broker.token));
    } catch (const std::exception& e) {
        throw RunError(0, "broker", e.what());
    }
    ControllerNode ctl(cfg, ctl_link);
    BotNode bot(cfg, bot_link);
    bot.set_observer(observer);
    bot.start();
    run_ticks(cfg, bot, [&] { ctl.drain(); }, 0ms);
    ctl.drain();
    return merge(std::move(bot.records()), std::move(ctl.records()));
}

RunLog run_networked(const ScenarioConfig& cfg, const Observer& observer) {
    broker::Broker b({cfg.broker.token});
    net::BrokerServer server(b, net::Endpoint{"127.0.0.1", 0}, std::nullopt);
    const std::uint16_t port = server.tcp_port();

    TcpLink ctl_link("127.0.0.1", port);
    TcpLink bot_link("127.0.0.1", port);
    try {
        handshake(ctl_link, controller_auth(cfg.broker.token));
        handshake(bot_link, bot_auth(cfg.broker.token));
    } catch (const std::exception& e) {
        throw RunError(0, "broker", e.what());
    }

    const auto t_start = std::chrono::steady_clock::now();
    auto wall = [t_start] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };
    ControllerNode ctl(cfg, ctl_link, wall);
    std::exception_ptr ctl_error;
    std::thread ctl_thread([&] {
        try {
            ctl.run(kNetTimeout);
        } catch (...) {
            ctl_error = std::current_exception();
        }
    });

    BotNode bot(cfg, bot_link);
    bot.set_observer(observer);
    std::exception_ptr bot_error;
    try {
        bot.start();
        run_ticks(cfg, bot, [] {}, kNetTimeout);
    } catch (...) {
        bot_error = std::current_exception();
        ctl_link.close();
    }
    ctl_thread.join();
    bot_link.close();
    server.stop();
    if (bot_error) {
        std::rethrow_exception(bot_error);
    }
    if (ctl_error) {
        std::rethrow_exception(ctl_error);
    }
    return merge(std::move(bot.records()), std::move(ctl.records()));
}

/// Discards everything; used when replaying recorded telemetry.
class NullLink final : public Link {
public:
    void send(const proto::Frame&) override {}
    std::optional<std::string> receive(std::chrono::milliseconds) override { return std::nullopt; }
};

ordered_json record_json(const LogRecord& r, bool with_rx) {
    ordered_json j;
    j["tick"] = r.tick;
    j["src"] = r.source == Source::bot ? "bot" : "ctl";
    if (with_rx) {
        j["rx_ts"] = r.rx_ts;
    }
    j["kind"] = r.kind;
    j["body"] = r.body;
    return j;
}

} // namespace

RunLog run_scenario(const ScenarioConfig& cfg, RunMode mode, const Observer& observer) {
    validate(cfg);
    return mode == RunMode::inproc ? run_inproc(cfg, observer) : run_networked(cfg, observer);
}

std::vector<LogRecord> replay_controller(const RunLog& log, const ScenarioConfig& cfg) {
    NullLink link;
    ControllerNode ctl(cfg, link);
    std::int64_t last_tick = -1;
    for (const LogRecord& r : log.records) {
        if (r.source == Source::bot && r.kind == "event" && r.body.value("event", "") == "start") {
            last_tick = r.body.value("ticks", std::int64_t{0}) - 1;
        }
    }
    std::size_t i = 0;
    const auto& recs = log.records;
    for (std::int64_t k = 0; k <= last_tick; ++k) {
        for (; i < recs.size() && recs[i].tick <= k; ++i) {
            if (recs[i].source == Source::controller && recs[i].kind == "tele") {
                ctl.handle(recs[i].body.dump());
            }
        }
        ctl.handle(proto::encode_frame(proto::Bridge{
            kControllerNode, {{"cmd", "tick"}, {"tick", k}, {"ts", static_cast<double>(k + 1) * cfg.dt}}}));
    }
    std::vector<LogRecord> out;
    for (LogRecord& r : ctl.records()) {
        if (r.kind == "cmd" || r.kind == "notify") {
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::string export_log(const RunLog& log, LogFormat format) {
    std::ostringstream os;
    if (format == LogFormat::jsonl) {
        for (const LogRecord& r : log.records) {
            os << record_json(r, true).dump() << '\n';
        }
        return os.str();
    }
    os << kCsvHeader << '\n';
    for (const LogRecord& r : log.records) {
        if (r.kind != "tele") {
            continue;
        }
        const auto& d = r.body.at("data");
        const auto& dht = d.at("dht");
        os << r.tick << ',' << r.body.at("seq").dump() << ',' << r.body.at("cp").dump() << ','
           << r.body.at("ts").dump() << ',' << d.at("tc").dump() << ','
           << (dht.is_array() ? dht[0].dump() : "") << ',' << (dht.is_array() ? dht[1].dump() : "") << ','
           << d.at("lux").dump() << ',' << (d.at("m").get<std::string>() == "H" ? 1 : 0) << ','
           << d.at("ph").dump() << ',' << d.at("bat").dump() << '\n';
    }
    return os.str();
}

RunLog parse_jsonl_log(const std::string& text) {
    RunLog log;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) {
            continue;
        }
        const ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw std::runtime_error("log line " + std::to_string(n) + ": not a JSON object");
        }
        try {
            LogRecord r;
            r.tick = j.at("tick").get<std::int64_t>();
            r.source = j.at("src").get<std::string>() == "bot" ? Source::bot : Source::controller;
            r.rx_ts = j.at("rx_ts").get<double>();
            r.kind = j.at("kind").get<std::string>();
            r.body = j.at("body");
            log.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("log line " + std::to_string(n) + ": " + e.what());
        }
    }
    return log;
}

std::string canonical_log(const RunLog& log) {
    std::string out;
    for (const LogRecord& r : log.records) {
        out += record_json(r, false).dump();
        out += '\n';
    }
    return out;
}

} // namespace agri::harness
