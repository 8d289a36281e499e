// SPDX-License-Identifier: Apache-2.0

#include "agribot/controller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "agribot/devices.hpp"

namespace agri::control {

using climate::Device;

proto::Bridge to_bridge(const RelayCommand& c, const std::string& dst) {
    nlohmann::json payload = {{"cmd", "relay"},
                              {"ch", c.channel()},
                              {"zone", c.zone},
                              {"dev", climate::to_string(c.device)},
                              {"on", c.on}};
    return proto::Bridge{dst, std::move(payload)};
}

std::optional<RelayCommand> relay_from_payload(const nlohmann::json& payload) {
    if (payload.value("cmd", "") != "relay") {
        return std::nullopt;
    }
    auto ch = payload.find("ch");
    auto on = payload.find("on");
    if (ch == payload.end() || !ch->is_number_unsigned() || on == payload.end() || !on->is_boolean()) {
        return std::nullopt;
    }
    const auto channel = ch->get<std::size_t>();
    return RelayCommand{channel / climate::kDevicesPerZone,
                        static_cast<Device>(channel % climate::kDevicesPerZone), on->get<bool>()};
}

ThermostatOutput thermostat(double value, double lo, double hi, double h, bool prev_heat, bool prev_cool) {
    bool heat = prev_heat;
    if (value < lo) {
        heat = true;
    } else if (value > lo + h) {
        heat = false;
    }
    bool cool = prev_cool;
    if (value > hi) {
        cool = true;
    } else if (value < hi - h) {
        cool = false;
    }
    if (heat && cool) {
        return {false, false, true};
    }
    return {heat, cool, false};
}

bool in_day_window(double now, const LightRule& rule) {
    const double phase = std::fmod(now, rule.period_s);
    if (rule.day_start_s <= rule.day_end_s) {
        return phase >= rule.day_start_s && phase < rule.day_end_s;
    }
    return phase >= rule.day_start_s || phase < rule.day_end_s;
}

namespace {

void diff_latches(const ZoneControl& before, const ZoneControl& after, std::size_t zone,
                  std::vector<RelayCommand>& out) {
    const std::pair<Device, bool> was[] = {{Device::heater, before.heater_latch},
                                           {Device::fan, before.fan_latch},
                                           {Device::pump, before.pump_latch},
                                           {Device::lamp, before.lamp_latch}};
    const bool now[] = {after.heater_latch, after.fan_latch, after.pump_latch, after.lamp_latch};
    // Switch-offs go out first so a heater/fan handover never overlaps.
    for (int pass = 0; pass < 2; ++pass) {
        const bool want_on = pass == 1;
        for (std::size_t i = 0; i < 4; ++i) {
            if (was[i].second != now[i] && now[i] == want_on) {
                out.push_back({zone, was[i].first, now[i]});
            }
        }
    }
}

} // namespace

Decision evaluate(const proto::TelemetryFrame& frame, std::size_t zone, const ThresholdConfig& cfg, ControlState st,
                  double now) {
    Decision d;
    ZoneControl& z = st.zones.at(zone);
    const ZoneControl before = z;

    const double temp = devices::lm35_celsius({frame.temp_counts});
    const auto th = thermostat(temp, cfg.temp.lo, cfg.temp.hi, cfg.temp.h, z.heater_latch, z.cool_latch);
    if (th.conflict) {
        d.notes.push_back({proto::Level::warn, "thermostat conflict in zone " + std::to_string(zone)});
    }
    z.heater_latch = th.heat;
    z.cool_latch = th.cool;

    if (frame.dht) {
        const double rh = (*frame.dht)[1];
        z.humid_latch = thermostat(rh, cfg.humidity.lo, cfg.humidity.hi, cfg.humidity.h, false, z.humid_latch).cool;
    } else {
        d.notes.push_back({proto::Level::info, "humidity sensor fault at checkpoint " + std::to_string(frame.checkpoint)});
    }
    // The fan both cools and dehumidifies, but never runs against the heater.
    z.fan_latch = z.cool_latch || (z.humid_latch && !z.heater_latch);

    if (!frame.moisture_high && cfg.pump_on_s > 0.0) {
        z.pump_timer_s = cfg.pump_on_s;
        z.pump_latch = true;
    }

    z.lamp_latch = frame.light_counts < cfg.light.lo_counts && in_day_window(now, cfg.light);

    if (frame.ph_counts < cfg.ph_lo_counts || frame.ph_counts > cfg.ph_hi_counts) {
        d.notes.push_back({proto::Level::warn, std::string(kFertilizerMessage) + " in zone " + std::to_string(zone)});
    }

    diff_latches(before, z, zone, d.commands);
    d.state = std::move(st);
    return d;
}

Decision advance_timers(ControlState st, double dt, const std::vector<std::size_t>& skip) {
    Decision d;
    for (std::size_t i = 0; i < st.zones.size(); ++i) {
        ZoneControl& z = st.zones[i];
        if (z.pump_timer_s <= 0.0 || std::find(skip.begin(), skip.end(), i) != skip.end()) {
            continue;
        }
        const ZoneControl before = z;
        z.pump_timer_s -= dt;
        if (z.pump_timer_s <= 1e-9) {
            z.pump_timer_s = 0.0;
            z.pump_latch = false;
        }
        diff_latches(before, z, i, d.commands);
    }
    d.state = std::move(st);
    return d;
}

bool unchanged(const proto::TelemetryFrame& a, const proto::TelemetryFrame& b, int eps) {
    auto close = [eps](int x, int y) { return std::abs(x - y) <= eps; };
    if (a.checkpoint != b.checkpoint || a.moisture_high != b.moisture_high) {
        return false;
    }
    if (!close(a.temp_counts, b.temp_counts) || !close(a.light_counts, b.light_counts) ||
        !close(a.ph_counts, b.ph_counts)) {
        return false;
    }
    if (a.dht.has_value() != b.dht.has_value()) {
        return false;
    }
    return !a.dht || (close((*a.dht)[0], (*b.dht)[0]) && close((*a.dht)[1], (*b.dht)[1]));
}

WatchdogResult watchdog_step(WatchdogState wd, const proto::TelemetryFrame* frame, double now,
                             const WatchdogConfig& cfg) {
    WatchdogResult r;
    if (frame != nullptr) {
        if (wd.last_frame && unchanged(*wd.last_frame, *frame, cfg.stale_epsilon)) {
            ++wd.repeat_count;
        } else {
            if (wd.last_frame && wd.last_frame->checkpoint != frame->checkpoint) {
                wd.alerted = false; // the bot moved on
            }
            wd.repeat_count = 0;
        }
        wd.last_frame = *frame;
        wd.last_seen_ts = frame->ts;
        if (wd.repeat_count >= cfg.stall_reports && !wd.alerted) {
            wd.alerted = true;
            r.alert = Notification{proto::Level::warn, kStuckMessage};
        }
    } else if (now - wd.last_seen_ts > cfg.silence_timeout_s && !wd.alerted) {
        wd.alerted = true;
        r.alert = Notification{proto::Level::warn, kStuckMessage};
    }
    r.state = std::move(wd);
    return r;
}

JsonlFileSink::JsonlFileSink(const std::string& path) : out_(path, std::ios::app) {}

bool JsonlFileSink::append(const nlohmann::ordered_json& record) {
    if (!out_) {
        return false;
    }
    out_ << record.dump() << '\n';
    out_.flush();
    return static_cast<bool>(out_);
}

nlohmann::ordered_json make_record(double rx_ts, const std::string& kind, nlohmann::ordered_json body) {
    nlohmann::ordered_json rec;
    rec["rx_ts"] = rx_ts;
    rec["kind"] = kind;
    rec["body"] = std::move(body);
    return rec;
}

bool persist(LogSink& sink, double rx_ts, const std::string& kind, nlohmann::ordered_json body) {
    return sink.append(make_record(rx_ts, kind, std::move(body)));
}

} // namespace agri::control
