// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "agribot/harness.hpp"
#include "agribot/transport.hpp"

namespace agri::harness {

using nlohmann::json;
using nlohmann::ordered_json;

std::int64_t ScenarioConfig::ticks() const {
    return static_cast<std::int64_t>(std::llround(duration_s / dt));
}

double ScenarioConfig::stuck_report_period() const {
    return report_period_s > 0.0 ? report_period_s : path.leg_time_s();
}

std::vector<std::size_t> ScenarioConfig::checkpoint_zones() const {
    std::vector<std::size_t> out;
    out.reserve(path.checkpoints.size());
    for (const bot::GridCoord& c : path.checkpoints) {
        out.push_back(c.row * cols + c.col);
    }
    return out;
}

namespace {

/// Walks one JSON object, remembering its dotted path for error messages.
class Section {
public:
    Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
        if (j_ != nullptr && !j_->is_object()) {
            throw ConfigError(path_, "must be an object");
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_ != nullptr && j_->contains(key); }
    [[nodiscard]] std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    Section sub(const char* key) const {
        return Section(has(key) ? &(*j_)[key] : nullptr, at(key));
    }

    const json* raw(const char* key) const { return has(key) ? &(*j_)[key] : nullptr; }

    void number(const char* key, double& out) const {
        if (!has(key)) return;
        const json& v = (*j_)[key];
        if (!v.is_number()) throw ConfigError(at(key), "must be a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }

    template <typename Int>
    void integer(const char* key, Int& out) const {
        if (!has(key)) return;
        const json& v = (*j_)[key];
        if (!v.is_number_integer()) throw ConfigError(at(key), "must be an integer");
        if constexpr (std::is_unsigned_v<Int>) {
            if (v.is_number_unsigned()) {
                out = v.get<Int>();
                return;
            }
            if (v.get<std::int64_t>() < 0) throw ConfigError(at(key), "must not be negative");
        }
        out = v.get<Int>();
    }

    void string(const char* key, std::string& out) const {
        if (!has(key)) return;
        const json& v = (*j_)[key];
        if (!v.is_string()) throw ConfigError(at(key), "must be a string");
        out = v.get<std::string>();
    }

    void only(std::initializer_list<const char*> keys) const {
        if (j_ == nullptr) return;
        for (const auto& [k, _] : j_->items()) {
            bool known = false;
            for (const char* allowed : keys) {
                known = known || k == allowed;
            }
            if (!known) throw ConfigError(at(k.c_str()), "unknown field");
        }
    }

    [[nodiscard]] const std::string& path() const { return path_; }

private:
    const json* j_;
    std::string path_;
};

void read_zone(const Section& s, climate::ZoneState& z) {
    s.number("temp_c", z.temp_c);
    s.number("humidity_pct", z.humidity_pct);
    s.number("light_lux", z.light_lux);
    s.number("moisture", z.moisture);
    s.number("ph", z.ph);
}

bot::GridCoord read_coord(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned()) {
        throw ConfigError(path, "checkpoint must be [row, col]");
    }
    return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

void read_band(const Section& s, control::Band& b) {
    s.only({"lo", "hi", "h"});
    s.number("lo", b.lo);
    s.number("hi", b.hi);
    s.number("h", b.h);
}

void require(bool ok, const std::string& path, const std::string& rule) {
    if (!ok) throw ConfigError(path, rule);
}

void check_zone(const climate::ZoneState& z, const std::string& path) {
    require(z.humidity_pct >= 0.0 && z.humidity_pct <= 100.0, path + ".humidity_pct", "must be within [0, 100]");
    require(z.moisture >= 0.0 && z.moisture <= 1.0, path + ".moisture", "must be within [0, 1]");
    require(z.ph >= 0.0 && z.ph <= 14.0, path + ".ph", "must be within [0, 14]");
    require(z.light_lux >= 0.0, path + ".light_lux", "must not be negative");
}

void check_band(const control::Band& b, const std::string& path) {
    require(b.lo < b.hi, path, "band requires lo < hi");
    require(b.h > 0.0, path + ".h", "hysteresis must be positive");
    require(b.lo + b.h < b.hi - b.h, path, "band requires lo + h < hi - h");
}

} // namespace

void validate(const ScenarioConfig& c) {
    require(c.dt > 0.0, "dt", "must be positive");
    require(c.duration_s >= 0.0, "duration_s", "must not be negative");
    require(c.rows >= 1 && c.cols >= 1, "grid", "needs at least one row and one column");

    const auto& m = c.model;
    const std::pair<const char*, double> rates[] = {
        {"k_amb", m.k_amb},         {"k_nbr", m.k_nbr},           {"heat_rate", m.heat_rate},
        {"fan_cool_gain", m.fan_cool_gain}, {"fan_cool_rate", m.fan_cool_rate}, {"irr_rate", m.irr_rate},
        {"dry_rate", m.dry_rate},   {"dry_temp_gain", m.dry_temp_gain}, {"evap_h_rate", m.evap_h_rate},
        {"vent_rate", m.vent_rate}, {"lamp_lux", m.lamp_lux}};
    for (const auto& [name, v] : rates) {
        require(v >= 0.0, std::string("model.") + name, "rates must not be negative");
    }
    require(m.shade_factor > 0.0 && m.shade_factor <= 1.0, "model.shade_factor", "must be within (0, 1]");
    require(m.stable_for(c.dt), "dt",
            "stability bound: k_amb*(1+fan_cool_gain) + 4*k_nbr and k_amb + vent_rate + 4*k_nbr must be <= 1/dt");

    const auto& a = c.ambient;
    require(a.light_peak_lux >= 0.0, "ambient.light_peak_lux", "must not be negative");
    require(a.period_s > 0.0, "ambient.period_s", "must be positive");
    require(a.day_length_s > 0.0 && a.day_length_s <= a.period_s, "ambient.day_length_s",
            "must satisfy 0 < day_length_s <= period_s");
    require(a.humidity_pct >= 0.0 && a.humidity_pct <= 100.0, "ambient.humidity_pct", "must be within [0, 100]");

    check_zone(c.initial, "initial");
    for (std::size_t i = 0; i < c.overrides.size(); ++i) {
        const std::string p = "zones[" + std::to_string(i) + "]";
        require(c.overrides[i].at.row < c.rows && c.overrides[i].at.col < c.cols, p, "zone outside the grid");
        check_zone(c.overrides[i].state, p);
    }

    const auto& path = c.path;
    require(!path.checkpoints.empty(), "path.checkpoints", "path needs at least one checkpoint");
    for (std::size_t i = 0; i < path.checkpoints.size(); ++i) {
        require(path.checkpoints[i].row < c.rows && path.checkpoints[i].col < c.cols,
                "path.checkpoints[" + std::to_string(i) + "]", "checkpoint outside the grid");
    }
    require(path.segment_length_m > 0.0, "path.segment_length_m", "must be positive");
    require(path.speed_mps > 0.0, "path.speed_mps", "must be positive");
    require(path.dwell_s >= 0.0, "path.dwell_s", "must not be negative");
    require(c.mud.mud_threshold >= 0.0 && c.mud.mud_threshold <= 1.0, "path.mud_threshold", "must be within [0, 1]");
    require(c.mud.p_stuck >= 0.0 && c.mud.p_stuck * c.dt <= 1.0, "path.p_stuck", "requires 0 <= p_stuck*dt <= 1");
    require(c.report_period_s >= 0.0, "path.report_period_s", "must not be negative");

    require(c.sensors.ar65_threshold >= 0.0 && c.sensors.ar65_threshold <= 1.0, "devices.ar65_threshold",
            "must be within [0, 1]");
    require(c.sensors.light_full_scale_lux > 0.0, "devices.light_full_scale_lux", "must be positive");
    require(c.relay_settle_s >= 0.0, "devices.relay_settle_s", "must not be negative");
    require(c.motors.drive_a >= 0.0 && c.motors.drive_a < c.motors.stall_a, "devices.drive_current_a",
            "requires 0 <= drive_current_a < stall_current_a");
    const auto& b = c.battery;
    require(b.charge_frac >= 0.0 && b.charge_frac <= 1.0, "devices.battery.charge_frac", "must be within [0, 1]");
    require(b.capacity_as > 0.0, "devices.battery.capacity_as", "must be positive");
    require(b.idle_draw_a >= 0.0 && b.idle_draw_a < b.drive_draw_a && b.drive_draw_a < b.stall_draw_a,
            "devices.battery", "requires 0 <= idle_draw_a < drive_draw_a < stall_draw_a");

    const auto& t = c.control;
    check_band(t.temp, "control.temp");
    check_band(t.humidity, "control.humidity");
    require(t.pump_on_s >= 0.0, "control.pump_on_s", "must not be negative");
    require(t.ph_lo_counts >= 0 && t.ph_hi_counts <= devices::kAdcMax && t.ph_lo_counts < t.ph_hi_counts,
            "control.ph", "requires 0 <= lo_counts < hi_counts <= 1023");
    require(t.light.lo_counts >= 0 && t.light.lo_counts <= devices::kAdcMax + 1, "control.light.lo_counts",
            "must be within [0, 1024]");
    require(t.light.period_s > 0.0, "control.light", "period must be positive");
    require(t.watchdog.stall_reports >= 2, "control.watchdog.stall_reports", "must be at least 2");
    require(t.watchdog.stale_epsilon >= 0, "control.watchdog.stale_epsilon", "must not be negative");
    require(t.watchdog.silence_timeout_s > path.leg_time_s(), "control.watchdog.silence_timeout_s",
            "must exceed one leg time (segment/speed + dwell)");

    require(!c.broker.token.empty(), "broker.token", "must not be empty");
    for (const auto& [name, addr] : {std::pair{"broker.listen", c.broker.listen}, std::pair{"broker.ws", c.broker.ws}}) {
        try {
            (void)net::parse_endpoint(addr);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(name, e.what());
        }
    }
    for (std::size_t i = 0; i < c.script.size(); ++i) {
        require(c.script[i].at_s >= 0.0, "script[" + std::to_string(i) + "].at_s", "must not be negative");
    }
}

ScenarioConfig load_config(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("$", "not valid JSON");
    }
    ScenarioConfig c;
    const Section root(&doc, "");
    root.only({"seed", "dt", "duration_s", "grid", "initial", "zones", "model", "ambient", "path", "devices",
               "control", "broker", "script"});
    root.integer("seed", c.seed);
    root.number("dt", c.dt);
    root.number("duration_s", c.duration_s);

    const Section grid = root.sub("grid");
    grid.only({"rows", "cols"});
    grid.integer("rows", c.rows);
    grid.integer("cols", c.cols);

    const Section model = root.sub("model");
    model.only({"k_amb", "k_nbr", "heat_rate", "fan_cool_gain", "fan_cool_rate", "irr_rate", "dry_rate",
                "dry_temp_gain", "evap_h_rate", "vent_rate", "lamp_lux", "shade_factor", "ph_drift"});
    auto& m = c.model;
    model.number("k_amb", m.k_amb);
    model.number("k_nbr", m.k_nbr);
    model.number("heat_rate", m.heat_rate);
    model.number("fan_cool_gain", m.fan_cool_gain);
    model.number("fan_cool_rate", m.fan_cool_rate);
    model.number("irr_rate", m.irr_rate);
    model.number("dry_rate", m.dry_rate);
    model.number("dry_temp_gain", m.dry_temp_gain);
    model.number("evap_h_rate", m.evap_h_rate);
    model.number("vent_rate", m.vent_rate);
    model.number("lamp_lux", m.lamp_lux);
    model.number("shade_factor", m.shade_factor);
    model.number("ph_drift", m.ph_drift);

    const Section amb = root.sub("ambient");
    amb.only({"temp_c", "temp_swing_c", "humidity_pct", "light_peak_lux", "day_length_s", "period_s"});
    amb.number("temp_c", c.ambient.temp_c);
    amb.number("temp_swing_c", c.ambient.temp_swing_c);
    amb.number("humidity_pct", c.ambient.humidity_pct);
    amb.number("light_peak_lux", c.ambient.light_peak_lux);
    amb.number("day_length_s", c.ambient.day_length_s);
    amb.number("period_s", c.ambient.period_s);

    c.initial = {c.ambient.temp_c, c.ambient.humidity_pct, 0.0, 0.35, 6.5};
    const Section init = root.sub("initial");
    init.only({"temp_c", "humidity_pct", "light_lux", "moisture", "ph"});
    read_zone(init, c.initial);

    if (const json* zones = root.raw("zones")) {
        if (!zones->is_array()) throw ConfigError("zones", "must be an array");
        for (std::size_t i = 0; i < zones->size(); ++i) {
            const Section z(&(*zones)[i], "zones[" + std::to_string(i) + "]");
            z.only({"row", "col", "temp_c", "humidity_pct", "light_lux", "moisture", "ph"});
            ZoneOverride o{{}, c.initial};
            if (!z.has("row") || !z.has("col")) throw ConfigError(z.path(), "needs row and col");
            z.integer("row", o.at.row);
            z.integer("col", o.at.col);
            read_zone(z, o.state);
            c.overrides.push_back(o);
        }
    }

    const Section path = root.sub("path");
    path.only({"checkpoints", "segment_length_m", "speed_mps", "dwell_s", "mud_threshold", "p_stuck", "stuck_emits",
               "report_period_s"});
    if (const json* cps = path.raw("checkpoints")) {
        if (!cps->is_array()) throw ConfigError("path.checkpoints", "must be an array");
        for (std::size_t i = 0; i < cps->size(); ++i) {
            c.path.checkpoints.push_back(read_coord((*cps)[i], "path.checkpoints[" + std::to_string(i) + "]"));
        }
    } else {
        c.path.checkpoints = bot::serpentine(c.rows, c.cols);
    }
    path.number("segment_length_m", c.path.segment_length_m);
    path.number("speed_mps", c.path.speed_mps);
    path.number("dwell_s", c.path.dwell_s);
    path.number("mud_threshold", c.mud.mud_threshold);
    path.number("p_stuck", c.mud.p_stuck);
    path.number("report_period_s", c.report_period_s);
    std::string emits = "repeat";
    path.string("stuck_emits", emits);
    if (emits == "repeat") {
        c.stuck_emits = bot::StuckEmits::repeat;
    } else if (emits == "silent") {
        c.stuck_emits = bot::StuckEmits::silent;
    } else {
        throw ConfigError("path.stuck_emits", "must be \"repeat\" or \"silent\"");
    }

    const Section dev = root.sub("devices");
    dev.only({"ar65_threshold", "light_full_scale_lux", "relay_settle_s", "drive_current_a", "stall_current_a",
              "battery"});
    dev.number("ar65_threshold", c.sensors.ar65_threshold);
    dev.number("light_full_scale_lux", c.sensors.light_full_scale_lux);
    dev.number("relay_settle_s", c.relay_settle_s);
    dev.number("drive_current_a", c.motors.drive_a);
    dev.number("stall_current_a", c.motors.stall_a);
    const Section bat = dev.sub("battery");
    bat.only({"charge_frac", "capacity_as", "idle_draw_a", "drive_draw_a", "stall_draw_a"});
    bat.number("charge_frac", c.battery.charge_frac);
    bat.number("capacity_as", c.battery.capacity_as);
    bat.number("idle_draw_a", c.battery.idle_draw_a);
    bat.number("drive_draw_a", c.battery.drive_draw_a);
    bat.number("stall_draw_a", c.battery.stall_draw_a);

    const Section ctl = root.sub("control");
    ctl.only({"temp", "humidity", "light", "pump_on_s", "ph", "watchdog"});
    read_band(ctl.sub("temp"), c.control.temp);
    read_band(ctl.sub("humidity"), c.control.humidity);
    c.control.light.day_start_s = 0.0;
    c.control.light.day_end_s = c.ambient.day_length_s;
    c.control.light.period_s = c.ambient.period_s;
    const Section light = ctl.sub("light");
    light.only({"lo_counts", "day_start_s", "day_end_s"});
    light.integer("lo_counts", c.control.light.lo_counts);
    light.number("day_start_s", c.control.light.day_start_s);
    light.number("day_end_s", c.control.light.day_end_s);
    ctl.number("pump_on_s", c.control.pump_on_s);
    const Section ph = ctl.sub("ph");
    ph.only({"lo_counts", "hi_counts"});
    ph.integer("lo_counts", c.control.ph_lo_counts);
    ph.integer("hi_counts", c.control.ph_hi_counts);
    const Section wd = ctl.sub("watchdog");
    wd.only({"stall_reports", "stale_epsilon", "silence_timeout_s"});
    wd.integer("stall_reports", c.control.watchdog.stall_reports);
    wd.integer("stale_epsilon", c.control.watchdog.stale_epsilon);
    wd.number("silence_timeout_s", c.control.watchdog.silence_timeout_s);

    const Section brk = root.sub("broker");
    brk.only({"listen", "ws", "token"});
    brk.string("listen", c.broker.listen);
    brk.string("ws", c.broker.ws);
    brk.string("token", c.broker.token);

    if (const json* script = root.raw("script")) {
        if (!script->is_array()) throw ConfigError("script", "must be an array");
        for (std::size_t i = 0; i < script->size(); ++i) {
            const Section s(&(*script)[i], "script[" + std::to_string(i) + "]");
            s.only({"at_s", "action"});
            ScriptStep step{0.0, ScriptAction::rescue};
            if (!s.has("at_s") || !s.has("action")) throw ConfigError(s.path(), "needs at_s and action");
            s.number("at_s", step.at_s);
            std::string action;
            s.string("action", action);
            if (action == "force_stuck") {
                step.action = ScriptAction::force_stuck;
            } else if (action == "rescue") {
                step.action = ScriptAction::rescue;
            } else if (action == "manual") {
                step.action = ScriptAction::set_manual;
            } else if (action == "auto") {
                step.action = ScriptAction::set_auto;
            } else {
                throw ConfigError(s.at("action"), "must be force_stuck, rescue, manual or auto");
            }
            c.script.push_back(step);
        }
    }

    validate(c);
    return c;
}

ScenarioConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path, "cannot open config file");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config(ss.str());
}

ordered_json to_json(const ScenarioConfig& c) {
    auto zone = [](const climate::ZoneState& z) {
        return ordered_json{{"temp_c", z.temp_c},
                            {"humidity_pct", z.humidity_pct},
                            {"light_lux", z.light_lux},
                            {"moisture", z.moisture},
                            {"ph", z.ph}};
    };
    ordered_json j;
    j["seed"] = c.seed;
    j["dt"] = c.dt;
    j["duration_s"] = c.duration_s;
    j["grid"] = {{"rows", c.rows}, {"cols", c.cols}};
    j["initial"] = zone(c.initial);
    j["zones"] = ordered_json::array();
    for (const auto& o : c.overrides) {
        ordered_json z = {{"row", o.at.row}, {"col", o.at.col}};
        z.update(zone(o.state));
        j["zones"].push_back(z);
    }
    const auto& m = c.model;
    j["model"] = {{"k_amb", m.k_amb},         {"k_nbr", m.k_nbr},
                  {"heat_rate", m.heat_rate}, {"fan_cool_gain", m.fan_cool_gain},
                  {"fan_cool_rate", m.fan_cool_rate}, {"irr_rate", m.irr_rate},
                  {"dry_rate", m.dry_rate},   {"dry_temp_gain", m.dry_temp_gain},
                  {"evap_h_rate", m.evap_h_rate}, {"vent_rate", m.vent_rate},
                  {"lamp_lux", m.lamp_lux},   {"shade_factor", m.shade_factor},
                  {"ph_drift", m.ph_drift}};
    j["ambient"] = {{"temp_c", c.ambient.temp_c},
                    {"temp_swing_c", c.ambient.temp_swing_c},
                    {"humidity_pct", c.ambient.humidity_pct},
                    {"light_peak_lux", c.ambient.light_peak_lux},
                    {"day_length_s", c.ambient.day_length_s},
                    {"period_s", c.ambient.period_s}};
    ordered_json cps = ordered_json::array();
    for (const auto& cp : c.path.checkpoints) {
        cps.push_back({cp.row, cp.col});
    }
    j["path"] = {{"checkpoints", cps},
                 {"segment_length_m", c.path.segment_length_m},
                 {"speed_mps", c.path.speed_mps},
                 {"dwell_s", c.path.dwell_s},
                 {"mud_threshold", c.mud.mud_threshold},
                 {"p_stuck", c.mud.p_stuck},
                 {"stuck_emits", c.stuck_emits == bot::StuckEmits::repeat ? "repeat" : "silent"},
                 {"report_period_s", c.report_period_s}};
    j["devices"] = {{"ar65_threshold", c.sensors.ar65_threshold},
                    {"light_full_scale_lux", c.sensors.light_full_scale_lux},
                    {"relay_settle_s", c.relay_settle_s},
                    {"drive_current_a", c.motors.drive_a},
                    {"stall_current_a", c.motors.stall_a},
                    {"battery",
                     {{"charge_frac", c.battery.charge_frac},
                      {"capacity_as", c.battery.capacity_as},
                      {"idle_draw_a", c.battery.idle_draw_a},
                      {"drive_draw_a", c.battery.drive_draw_a},
                      {"stall_draw_a", c.battery.stall_draw_a}}}};
    const auto& t = c.control;
    auto band = [](const control::Band& b) { return ordered_json{{"lo", b.lo}, {"hi", b.hi}, {"h", b.h}}; };
    j["control"] = {{"temp", band(t.temp)},
                    {"humidity", band(t.humidity)},
                    {"light",
                     {{"lo_counts", t.light.lo_counts},
                      {"day_start_s", t.light.day_start_s},
                      {"day_end_s", t.light.day_end_s}}},
                    {"pump_on_s", t.pump_on_s},
                    {"ph", {{"lo_counts", t.ph_lo_counts}, {"hi_counts", t.ph_hi_counts}}},
                    {"watchdog",
                     {{"stall_reports", t.watchdog.stall_reports},
                      {"stale_epsilon", t.watchdog.stale_epsilon},
                      {"silence_timeout_s", t.watchdog.silence_timeout_s}}}};
    j["broker"] = {{"listen", c.broker.listen}, {"ws", c.broker.ws}, {"token", c.broker.token}};
    j["script"] = ordered_json::array();
    for (const auto& s : c.script) {
        static constexpr const char* names[] = {"force_stuck", "rescue", "manual", "auto"};
        j["script"].push_back({{"at_s", s.at_s}, {"action", names[static_cast<int>(s.action)]}});
    }
    return j;
}

} // namespace agri::harness
