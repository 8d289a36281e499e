// SPDX-License-Identifier: Apache-2.0

// Discrete-time greenhouse microclimate.
//
// The greenhouse is a rows x cols grid of zones. Each zone relaxes toward the
// outside air, exchanges heat and moisture with its 4-connected neighbours and
// responds additively to its relay-switched actuators. Integration is forward
// Euler; ModelParams::stable_for() is the precondition on dt.

#ifndef AGRIBOT_CLIMATE_HPP
#define AGRIBOT_CLIMATE_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace agri::climate {

struct ZoneState {
    double temp_c = 20.0;
    double humidity_pct = 50.0;
    double light_lux = 0.0;
    double moisture = 0.5;
    double ph = 7.0;

    bool operator==(const ZoneState&) const = default;
};

struct AmbientProfile {
    double temp_c = 20.0;
    /// Peak-to-mean amplitude of a sinusoidal day/night temperature swing.
    double temp_swing_c = 0.0;
    double humidity_pct = 50.0;
    double light_peak_lux = 50000.0;
    double day_length_s = 43200.0;
    double period_s = 86400.0;
};

/// Outside conditions at one instant.
struct AmbientNow {
    double temp_c;
    double humidity_pct;
    double lux;
};

struct ZoneActuators {
    bool heater = false;
    bool fan = false;
    bool pump = false;
    bool lamp = false;

    bool operator==(const ZoneActuators&) const = default;
};

enum class Device : int { heater = 0, fan = 1, pump = 2, lamp = 3 };
inline constexpr int kDevicesPerZone = 4;

const char* to_string(Device d);

/// Per-zone actuator states, row-major. Mutated only by the relay bank.
using ActuatorBank = std::vector<ZoneActuators>;

struct ModelParams {
    double k_amb = 1.0e-4;          // 1/s
    double k_nbr = 5.0e-5;          // 1/s
    double heat_rate = 3.0e-3;      // degC/s
    double fan_cool_gain = 0.5;     // multiplies k_amb while the fan runs
    double fan_cool_rate = 5.0e-3;  // degC/s, evaporative pad behind the fan
    double irr_rate = 2.0e-4;       // fraction/s
    double dry_rate = 2.0e-6;       // 1/s
    double dry_temp_gain = 0.05;    // 1/degC above 20 degC
    double evap_h_rate = 1.0e-3;    // %RH/s per unit moisture
    double vent_rate = 1.0e-3;      // 1/s
    double lamp_lux = 8000.0;
    double shade_factor = 0.7;
    double ph_drift = 0.0;          // pH/s

    /// Largest per-step relaxation coefficient times dt must not exceed one.
    [[nodiscard]] double stiffness() const;
    [[nodiscard]] bool stable_for(double dt) const { return stiffness() * dt <= 1.0; }
};

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Greenhouse {
public:
    Greenhouse(std::size_t rows, std::size_t cols, const ZoneState& initial = {});

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return zones_.size(); }
    [[nodiscard]] std::size_t index(std::size_t r, std::size_t c) const { return r * cols_ + c; }

    ZoneState& at(std::size_t r, std::size_t c) { return zones_.at(index(r, c)); }
    [[nodiscard]] const ZoneState& at(std::size_t r, std::size_t c) const { return zones_.at(index(r, c)); }
    ZoneState& operator[](std::size_t i) { return zones_[i]; }
    const ZoneState& operator[](std::size_t i) const { return zones_[i]; }

    [[nodiscard]] std::span<const ZoneState> zones() const { return zones_; }

    /// 4-connected, non-periodic neighbours of zone i.
    [[nodiscard]] std::vector<std::size_t> neighbors(std::size_t i) const;

    bool operator==(const Greenhouse&) const = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<ZoneState> zones_;
};

/// Diurnal half-sine illuminance; zero outside the daylight window.
[[nodiscard]] double ambient_light(double t, const AmbientProfile& profile);

/// Outside temperature, humidity and light at time t.
[[nodiscard]] AmbientNow ambient_at(double t, const AmbientProfile& profile);

/// Clamp humidity, moisture, pH and light into their physical ranges.
[[nodiscard]] ZoneState clamp(ZoneState z);

/// One forward-Euler step of a single zone. Throws ModelError on non-finite input.
[[nodiscard]] ZoneState step_zone(const ZoneState& z, std::span<const ZoneState> neighbors,
                                  const ZoneActuators& act, const AmbientNow& ambient,
                                  const ModelParams& p, double dt);

/// Unclamped update; exposed for the monotonicity properties.
[[nodiscard]] ZoneState step_zone_raw(const ZoneState& z, std::span<const ZoneState> neighbors,
                                      const ZoneActuators& act, const AmbientNow& ambient,
                                      const ModelParams& p, double dt);

/// Steps every zone from the same pre-step grid. Errors name the zone.
[[nodiscard]] Greenhouse step_greenhouse(const Greenhouse& m, const ActuatorBank& act,
                                         const ModelParams& p, const AmbientNow& ambient, double dt);

[[nodiscard]] Greenhouse step_greenhouse(const Greenhouse& m, const ActuatorBank& act,
                                         const ModelParams& p, const AmbientProfile& ambient,
                                         double t, double dt);

} // namespace agri::climate

#endif // AGRIBOT_CLIMATE_HPP
