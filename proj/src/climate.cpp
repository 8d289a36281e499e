// SPDX-License-Identifier: Apache-2.0

#include "agribot/climate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace agri::climate {

const char* to_string(Device d) {
    switch (d) {
    case Device::heater: return "heater";
    case Device::fan: return "fan";
    case Device::pump: return "pump";
    case Device::lamp: return "lamp";
    }
    return "?";
}

double ModelParams::stiffness() const {
    const double thermal = k_amb * (1.0 + fan_cool_gain) + 4.0 * k_nbr;
    const double moist = k_amb + vent_rate + 4.0 * k_nbr;
    return std::max(thermal, moist);
}

Greenhouse::Greenhouse(std::size_t rows, std::size_t cols, const ZoneState& initial)
    : rows_(rows), cols_(cols), zones_(rows * cols, initial) {
    if (rows == 0 || cols == 0) {
        throw ModelError("greenhouse grid needs at least one row and one column");
    }
}

std::vector<std::size_t> Greenhouse::neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    out.reserve(4);
    const std::size_t r = i / cols_;
    const std::size_t c = i % cols_;
    if (r > 0) out.push_back(index(r - 1, c));
    if (r + 1 < rows_) out.push_back(index(r + 1, c));
    if (c > 0) out.push_back(index(r, c - 1));
    if (c + 1 < cols_) out.push_back(index(r, c + 1));
    return out;
}

double ambient_light(double t, const AmbientProfile& profile) {
    const double phase = std::fmod(t, profile.period_s);
    if (phase >= profile.day_length_s) {
        return 0.0;
    }
    return profile.light_peak_lux * std::max(0.0, std::sin(std::numbers::pi * phase / profile.day_length_s));
}

AmbientNow ambient_at(double t, const AmbientProfile& profile) {
    double temp = profile.temp_c;
    if (profile.temp_swing_c != 0.0) {
        temp += profile.temp_swing_c * std::sin(2.0 * std::numbers::pi * t / profile.period_s);
    }
    return {temp, profile.humidity_pct, ambient_light(t, profile)};
}

ZoneState clamp(ZoneState z) {
    z.humidity_pct = std::clamp(z.humidity_pct, 0.0, 100.0);
    z.moisture = std::clamp(z.moisture, 0.0, 1.0);
    z.ph = std::clamp(z.ph, 0.0, 14.0);
    z.light_lux = std::max(z.light_lux, 0.0);
    return z;
}

namespace {

bool finite(const ZoneState& z) {
    return std::isfinite(z.temp_c) && std::isfinite(z.humidity_pct) && std::isfinite(z.light_lux) &&
           std::isfinite(z.moisture) && std::isfinite(z.ph);
}

double on(bool b) { return b ? 1.0 : 0.0; }

} // namespace

ZoneState step_zone_raw(const ZoneState& z, std::span<const ZoneState> neighbors, const ZoneActuators& act,
                        const AmbientNow& ambient, const ModelParams& p, double dt) {
    if (!finite(z) || !std::isfinite(ambient.temp_c) || !std::isfinite(ambient.humidity_pct) ||
        !std::isfinite(ambient.lux) || !std::isfinite(dt)) {
        throw ModelError("non-finite zone or ambient input");
    }
    if (dt <= 0.0) {
        throw ModelError("dt must be positive");
    }

    double temp_exchange = 0.0;
    double hum_exchange = 0.0;
    for (const ZoneState& n : neighbors) {
        if (!finite(n)) {
            throw ModelError("non-finite neighbour state");
        }
        temp_exchange += n.temp_c - z.temp_c;
        hum_exchange += n.humidity_pct - z.humidity_pct;
    }

    const double fan = on(act.fan);
    ZoneState out;
    out.temp_c = z.temp_c + dt * (p.k_amb * (ambient.temp_c - z.temp_c) * (1.0 + fan * p.fan_cool_gain) +
                                  on(act.heater) * p.heat_rate - fan * p.fan_cool_rate +
                                  p.k_nbr * temp_exchange);
    out.humidity_pct = z.humidity_pct + dt * (p.k_amb * (ambient.humidity_pct - z.humidity_pct) +
                                              p.evap_h_rate * z.moisture -
                                              p.vent_rate * fan * (z.humidity_pct - ambient.humidity_pct) +
                                              p.k_nbr * hum_exchange);
    out.moisture = z.moisture + dt * (on(act.pump) * p.irr_rate -
                                      p.dry_rate * (1.0 + p.dry_temp_gain * std::max(z.temp_c - 20.0, 0.0)) *
                                          z.moisture);
    out.light_lux = p.shade_factor * ambient.lux + on(act.lamp) * p.lamp_lux;
    out.ph = z.ph + dt * p.ph_drift;

    if (!finite(out)) {
        throw ModelError("zone update produced a non-finite value");
    }
    return out;
}

ZoneState step_zone(const ZoneState& z, std::span<const ZoneState> neighbors, const ZoneActuators& act,
                    const AmbientNow& ambient, const ModelParams& p, double dt) {
    return clamp(step_zone_raw(z, neighbors, act, ambient, p, dt));
}

Greenhouse step_greenhouse(const Greenhouse& m, const ActuatorBank& act, const ModelParams& p,
                           const AmbientNow& ambient, double dt) {
    if (act.size() != m.size()) {
        throw ModelError("actuator bank size " + std::to_string(act.size()) + " does not match " +
                         std::to_string(m.size()) + " zones");
    }
    Greenhouse next = m;
    std::vector<ZoneState> nbr;
    for (std::size_t i = 0; i < m.size(); ++i) {
        nbr.clear();
        for (std::size_t j : m.neighbors(i)) {
            nbr.push_back(m[j]);
        }
        try {
            next[i] = step_zone(m[i], nbr, act[i], ambient, p, dt);
        } catch (const ModelError& e) {
            throw ModelError("zone (" + std::to_string(i / m.cols()) + "," + std::to_string(i % m.cols()) +
                             "): " + e.what());
        }
    }
    return next;
}

Greenhouse step_greenhouse(const Greenhouse& m, const ActuatorBank& act, const ModelParams& p,
                           const AmbientProfile& ambient, double t, double dt) {
    return step_greenhouse(m, act, p, ambient_at(t, ambient), dt);
}

} // namespace agri::climate
