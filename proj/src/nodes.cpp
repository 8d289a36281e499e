// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "agribot/harness.hpp"
#include "agribot/transport.hpp"

namespace agri::harness {

using nlohmann::ordered_json;
using namespace std::chrono_literals;

// Links -------------------------------------------------------------------------

LoopbackLink::LoopbackLink(broker::Broker& b)
    : broker_(b), inbox_(std::make_shared<std::deque<std::string>>()) {
    std::weak_ptr<std::deque<std::string>> weak = inbox_;
    id_ = broker_.connect([weak](std::string line) {
        if (auto q = weak.lock()) {
            if (!line.empty() && line.back() == '\n') {
                line.pop_back();
            }
            q->push_back(std::move(line));
        }
    });
}

LoopbackLink::~LoopbackLink() { broker_.disconnect(id_); }

void LoopbackLink::send(const proto::Frame& f) { broker_.receive(id_, proto::encode_frame(f)); }

std::optional<std::string> LoopbackLink::receive(std::chrono::milliseconds) {
    if (inbox_->empty()) {
        return std::nullopt;
    }
    std::string line = std::move(inbox_->front());
    inbox_->pop_front();
    return line;
}

namespace detail {
class TcpClientHolder {
public:
    TcpClientHolder(const std::string& host, std::uint16_t port) : client(net::Endpoint{host, port}) {}
    net::TcpClient client;
};
} // namespace detail

TcpLink::TcpLink(const std::string& host, std::uint16_t port)
    : client_(std::make_unique<detail::TcpClientHolder>(host, port)) {}

TcpLink::~TcpLink() = default;

void TcpLink::send(const proto::Frame& f) { client_->client.send(f); }

std::optional<std::string> TcpLink::receive(std::chrono::milliseconds timeout) {
    return client_->client.receive(timeout);
}

bool TcpLink::connected() const { return client_->client.connected(); }

void TcpLink::close() { client_->client.close(); }

proto::Auth bot_auth(const std::string& token) { return {kBotNode, token, {{0, 1, 2, 3}, false}}; }

proto::Auth controller_auth(const std::string& token) { return {kControllerNode, token, {{}, true}}; }

void handshake(Link& link, const proto::Auth& auth, std::chrono::milliseconds timeout) {
    link.send(auth);
    const auto line = link.receive(timeout);
    if (!line) {
        throw std::runtime_error("no reply to auth from broker");
    }
    const proto::Frame reply = proto::parse_frame(*line);
    if (const auto* err = std::get_if<proto::Err>(&reply)) {
        throw std::runtime_error("broker refused auth: " + err->code);
    }
    if (!std::holds_alternative<proto::Ok>(reply)) {
        throw std::runtime_error(std::string("unexpected reply to auth: ") + proto::kind(reply));
    }
}

// Bot ---------------------------------------------------------------------------

namespace {

climate::Greenhouse initial_world(const ScenarioConfig& cfg) {
    climate::Greenhouse g(cfg.rows, cfg.cols, cfg.initial);
    for (const ZoneOverride& o : cfg.overrides) {
        g.at(o.at.row, o.at.col) = o.state;
    }
    return g;
}

bot::BotState initial_bot(const ScenarioConfig& cfg) {
    bot::BotState b;
    b.battery = cfg.battery;
    return b;
}

std::string payload_cmd(const nlohmann::json& payload) {
    if (!payload.is_object()) {
        return {};
    }
    const auto it = payload.find("cmd");
    return it != payload.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

} // namespace

BotNode::BotNode(const ScenarioConfig& cfg, Link& link)
    : cfg_(cfg),
      link_(link),
      world_(initial_world(cfg)),
      relays_(cfg.rows * cfg.cols * climate::kDevicesPerZone, cfg.relay_settle_s),
      actuators_(cfg.rows * cfg.cols),
      bot_(initial_bot(cfg)),
      stuck_rng_(bot::stream_for(cfg.seed, "stuck")),
      cp_zone_(cfg.checkpoint_zones()) {}

void BotNode::start() {
    log_event("start", {{"seed", cfg_.seed},
                        {"dt", cfg_.dt},
                        {"ticks", cfg_.ticks()},
                        {"rows", cfg_.rows},
                        {"cols", cfg_.cols},
                        {"checkpoints", cfg_.path.size()}});
}

void BotNode::log_event(const std::string& name, ordered_json extra) {
    ordered_json body;
    body["event"] = name;
    body["t"] = static_cast<double>(tick_) * cfg_.dt;
    for (auto& [k, v] : extra.items()) {
        body[k] = v;
    }
    records_.push_back({tick_, Source::bot, static_cast<double>(tick_) * cfg_.dt, "event", std::move(body)});
}

void BotNode::emit(const proto::TelemetryFrame& f) {
    link_.send(f);
    last_frame_ = f;
    last_emit_t_ = f.ts;
}

void BotNode::apply_script(std::int64_t k) {
    for (const ScriptStep& s : cfg_.script) {
        if (static_cast<std::int64_t>(std::floor(s.at_s / cfg_.dt + 1e-9)) != k) {
            continue;
        }
        switch (s.action) {
        case ScriptAction::force_stuck:
            bot_ = bot::force_stuck(bot_, cfg_.motors);
            log_event("stuck", {{"forced", true}, {"checkpoint", bot::nearest_checkpoint(bot_, cfg_.path)}});
            break;
        case ScriptAction::rescue: {
            auto r = bot::rescue(bot_, cfg_.motors);
            bot_ = r.bot;
            for (const bot::Event& e : r.events) {
                log_event(bot::to_string(e.kind));
            }
            break;
        }
        case ScriptAction::set_manual:
        case ScriptAction::set_auto: {
            const auto mode = s.action == ScriptAction::set_manual ? bot::Mode::manual : bot::Mode::automatic;
            bot_ = bot::set_mode(bot_, mode);
            log_event("mode_changed", {{"mode", bot::to_string(mode)}});
            break;
        }
        }
    }
}

void BotNode::handle(const std::string& line) {
    proto::Frame frame;
    try {
        frame = proto::parse_frame(line);
    } catch (const proto::ProtocolError&) {
        return;
    }
    if (const auto* vw = std::get_if<proto::VirtualWrite>(&frame)) {
        if (bot_.mode != bot::Mode::manual || vw->pin < 0 || vw->pin > 3) {
            return;
        }
        auto [pins, drive] = bot::handle_vpin(vw->pin, static_cast<int>(vw->val), bot_.pins);
        bot_.pins = pins;
        bot_.drive = drive;
        return;
    }
    const auto* br = std::get_if<proto::Bridge>(&frame);
    if (br == nullptr) {
        return;
    }
    const std::string cmd = payload_cmd(br->payload);
    if (cmd == "relay") {
        const auto rc = control::relay_from_payload(br->payload);
        if (!rc) {
            log_event("bad_relay_command");
            return;
        }
        try {
            relays_ = devices::relay_set(relays_, rc->channel(), rc->on);
        } catch (const std::out_of_range&) {
            log_event("bad_relay_command", {{"channel", rc->channel()}});
        }
    } else if (cmd == "rescue") {
        auto r = bot::rescue(bot_, cfg_.motors);
        bot_ = r.bot;
        for (const bot::Event& e : r.events) {
            log_event(bot::to_string(e.kind));
        }
    } else if (cmd == "mode") {
        const auto m = br->payload.value("mode", std::string{});
        if (m == "manual" || m == "auto") {
            const auto mode = m == "manual" ? bot::Mode::manual : bot::Mode::automatic;
            bot_ = bot::set_mode(bot_, mode);
            log_event("mode_changed", {{"mode", bot::to_string(mode)}});
        }
    } else if (cmd == "sample") {
        const std::size_t cp = bot::nearest_checkpoint(bot_, cfg_.path);
        auto [b, f] = bot::sample_checkpoint(bot_, cp, world_[cp_zone_[cp]], cfg_.sensors,
                                             static_cast<double>(tick_) * cfg_.dt);
        bot_ = b;
        emit(f);
    } else if (cmd == "ack") {
        acked_ = br->payload.value("tick", acked_);
    }
}

void BotNode::tick(std::int64_t k) {
    tick_ = k;
    const double dt = cfg_.dt;
    const double t0 = static_cast<double>(k) * dt;
    const double t1 = static_cast<double>(k + 1) * dt;

    apply_script(k);
    if (!lockstep_) {
        while (auto line = link_.receive(0ms)) {
            pending_.push_back(std::move(*line));
        }
    }
    std::vector<std::string> inbox;
    inbox.swap(pending_);
    for (const std::string& line : inbox) {
        handle(line);
    }

    relays_ = devices::relay_tick(relays_, dt);
    for (std::size_t z = 0; z < actuators_.size(); ++z) {
        const auto* ch = &relays_.channels[z * climate::kDevicesPerZone];
        actuators_[z] = {ch[0].actual, ch[1].actual, ch[2].actual, ch[3].actual};
    }

    try {
        world_ = climate::step_greenhouse(world_, actuators_, cfg_.model, cfg_.ambient, t0, dt);
    } catch (const std::exception& e) {
        throw RunError(k, "microclimate", e.what());
    }

    bot::StepResult r;
    try {
        const std::size_t here = bot::nearest_checkpoint(bot_, cfg_.path);
        r = bot::fsm_step(bot_, cfg_.path, world_[cp_zone_[here]], cfg_.mud, cfg_.motors, stuck_rng_, dt);
    } catch (const std::exception& e) {
        throw RunError(k, "agribot", e.what());
    }
    bot_ = r.bot;
    for (const bot::Event& e : r.events) {
        if (e.kind == bot::EventKind::sample_due) {
            auto [b, f] = bot::sample_checkpoint(bot_, e.checkpoint, world_[cp_zone_[e.checkpoint]], cfg_.sensors, t1);
            bot_ = b;
            emit(f);
        } else {
            log_event(bot::to_string(e.kind), {{"checkpoint", e.checkpoint}});
        }
    }

    // A stuck bot keeps reporting what it last saw.
    if (bot_.phase == bot::Phase::stuck && cfg_.stuck_emits == bot::StuckEmits::repeat &&
        t1 - last_emit_t_ >= cfg_.stuck_report_period() - 1e-9) {
        if (last_frame_) {
            proto::TelemetryFrame f = *last_frame_;
            f.seq = bot_.seq++;
            f.ts = t1;
            f.battery_frac = bot_.battery.charge_frac;
            emit(f);
        } else {
            const std::size_t cp = bot::nearest_checkpoint(bot_, cfg_.path);
            auto [b, f] = bot::sample_checkpoint(bot_, cp, world_[cp_zone_[cp]], cfg_.sensors, t1);
            bot_ = b;
            emit(f);
        }
    }

    for (std::size_t z = 0; z < actuators_.size(); ++z) {
        if (actuators_[z].heater && actuators_[z].fan) {
            log_event("safety_violation", {{"zone", z}});
        }
    }

    if (observer_) {
        observer_(TickView{k, t1, world_, actuators_, bot_});
    }

    if (lockstep_) {
        link_.send(proto::Bridge{kControllerNode, {{"cmd", "tick"}, {"tick", k}, {"ts", t1}}});
    }
}

bool BotNode::await_ack(std::int64_t k, std::chrono::milliseconds timeout) {
    if (!lockstep_) {
        return false;
    }
    while (acked_ < k) {
        auto line = link_.receive(timeout);
        if (!line) {
            throw RunError(k, "harness", "no acknowledgement from the controller");
        }
        proto::Frame f;
        try {
            f = proto::parse_frame(*line);
        } catch (const proto::ProtocolError&) {
            continue;
        }
        if (const auto* err = std::get_if<proto::Err>(&f); err != nullptr && err->code == broker::code::no_route) {
            lockstep_ = false;
            return false;
        }
        const auto* br = std::get_if<proto::Bridge>(&f);
        if (br != nullptr && payload_cmd(br->payload) == "ack") {
            acked_ = br->payload.value("tick", acked_);
            continue;
        }
        pending_.push_back(std::move(*line));
    }
    return true;
}

void BotNode::finish() {
    if (lockstep_) {
        link_.send(proto::Bridge{kControllerNode, {{"cmd", "end"}}});
    }
}

// Controller --------------------------------------------------------------------

ControllerNode::ControllerNode(const ScenarioConfig& cfg, Link& link, std::function<double()> clock,
                               control::LogSink* sink)
    : cfg_(cfg),
      link_(link),
      clock_(std::move(clock)),
      sink_(sink),
      state_(cfg.rows * cfg.cols),
      cp_zone_(cfg.checkpoint_zones()) {}

double ControllerNode::rx_now() const {
    return clock_ ? clock_() : static_cast<double>(tick_ + 1) * cfg_.dt;
}

void ControllerNode::record(const std::string& kind, ordered_json body) {
    const double rx = rx_now();
    if (sink_ != nullptr && !sink_failed_ && !control::persist(*sink_, rx, kind, body)) {
        sink_failed_ = true;
        notify({proto::Level::warn, "controller log write failed"});
    }
    records_.push_back({tick_, Source::controller, rx, kind, std::move(body)});
}

void ControllerNode::notify(const control::Notification& n) {
    const proto::Notify frame{n.level, n.msg};
    link_.send(frame);
    record("notify", proto::to_json(frame));
}

void ControllerNode::apply(const control::Decision& d) {
    state_ = d.state;
    for (const control::RelayCommand& c : d.commands) {
        const proto::Bridge frame = control::to_bridge(c, kBotNode);
        link_.send(frame);
        record("cmd", proto::to_json(frame));
    }
    for (const control::Notification& n : d.notes) {
        notify(n);
    }
}

void ControllerNode::on_tele(const proto::TelemetryFrame& f) {
    record("tele", proto::to_json(f));
    if (f.checkpoint < 0 || static_cast<std::size_t>(f.checkpoint) >= cp_zone_.size()) {
        notify({proto::Level::warn, "telemetry from unknown checkpoint " + std::to_string(f.checkpoint)});
        return;
    }
    const std::size_t zone = cp_zone_[static_cast<std::size_t>(f.checkpoint)];
    const control::Decision d = control::evaluate(f, zone, cfg_.control, state_, f.ts);
    if (!f.moisture_high && cfg_.control.pump_on_s > 0.0) {
        armed_this_tick_.push_back(zone);
    }
    apply(d);

    auto wd = control::watchdog_step(watchdog_, &f, f.ts, cfg_.control.watchdog);
    watchdog_ = std::move(wd.state);
    if (wd.alert) {
        notify(*wd.alert);
    }
}

void ControllerNode::on_barrier(std::int64_t tick, double ts) {
    now_ = ts;
    apply(control::advance_timers(state_, cfg_.dt, armed_this_tick_));
    armed_this_tick_.clear();
    auto wd = control::watchdog_step(watchdog_, nullptr, ts, cfg_.control.watchdog);
    watchdog_ = std::move(wd.state);
    if (wd.alert) {
        notify(*wd.alert);
    }
    link_.send(proto::Bridge{kBotNode, {{"cmd", "ack"}, {"tick", tick}}});
    tick_ = tick + 1;
}

bool ControllerNode::handle(const std::string& line) {
    if (finished_) {
        return false;
    }
    proto::Frame frame;
    try {
        frame = proto::parse_frame(line);
    } catch (const proto::ProtocolError&) {
        return true;
    }
    if (const auto* f = std::get_if<proto::TelemetryFrame>(&frame)) {
        on_tele(*f);
    } else if (const auto* br = std::get_if<proto::Bridge>(&frame)) {
        const std::string cmd = payload_cmd(br->payload);
        if (cmd == "tick") {
            on_barrier(br->payload.value("tick", tick_), br->payload.value("ts", now_));
        } else if (cmd == "end") {
            finished_ = true;
        }
    }
    return !finished_;
}

void ControllerNode::drain() {
    while (!finished_) {
        auto line = link_.receive(0ms);
        if (!line) {
            return;
        }
        handle(*line);
    }
}

void ControllerNode::run(std::chrono::milliseconds idle) {
    while (!finished_) {
        auto line = link_.receive(idle);
        if (!line) {
            return;
        }
        handle(*line);
    }
}

} // namespace agri::harness
