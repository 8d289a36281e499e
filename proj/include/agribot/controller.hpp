// SPDX-License-Identifier: Apache-2.0

// Control-end rules: hysteresis thermostats, irrigation timers, supplemental
// lighting, fertilizer notices and the stale-telemetry watchdog.

#ifndef AGRIBOT_CONTROLLER_HPP
#define AGRIBOT_CONTROLLER_HPP

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agribot/climate.hpp"
#include "agribot/protocol.hpp"

namespace agri::control {

struct Band {
    double lo;
    double hi;
    double h; // hysteresis
};

struct LightRule {
    int lo_counts = 100;
    double day_start_s = 0.0;
    double day_end_s = 43200.0;
    double period_s = 86400.0;
};

struct WatchdogConfig {
    int stall_reports = 5;
    int stale_epsilon = 1;
    double silence_timeout_s = 120.0;
};

struct ThresholdConfig {
    Band temp{18.0, 24.0, 1.0};
    Band humidity{40.0, 80.0, 5.0};
    LightRule light;
    double pump_on_s = 120.0;
    int ph_lo_counts = 439;
    int ph_hi_counts = 585;
    WatchdogConfig watchdog;
};

/// Rule memory for one zone. fan_latch is derived from the cooling and
/// humidity latches and is what the fan relay follows.
struct ZoneControl {
    bool heater_latch = false;
    bool cool_latch = false;
    bool humid_latch = false;
    bool fan_latch = false;
    bool lamp_latch = false;
    bool pump_latch = false;
    double pump_timer_s = 0.0;
    bool operator==(const ZoneControl&) const = default;
};

struct ControlState {
    std::vector<ZoneControl> zones;
    ControlState() = default;
    explicit ControlState(std::size_t n) : zones(n) {}
    bool operator==(const ControlState&) const = default;
};

struct RelayCommand {
    std::size_t zone;
    climate::Device device;
    bool on;

    [[nodiscard]] std::size_t channel() const {
        return zone * climate::kDevicesPerZone + static_cast<std::size_t>(device);
    }
    bool operator==(const RelayCommand&) const = default;
};

/// Bridge frame carrying a relay command to `dst`.
[[nodiscard]] proto::Bridge to_bridge(const RelayCommand& c, const std::string& dst);
[[nodiscard]] std::optional<RelayCommand> relay_from_payload(const nlohmann::json& payload);

struct Notification {
    proto::Level level;
    std::string msg;
    bool operator==(const Notification&) const = default;
};

struct ThermostatOutput {
    bool heat;
    bool cool;
    bool conflict; // both would have been on
};

/// Two-sided bang-bang control with a deadband inside each edge of [lo, hi].
[[nodiscard]] ThermostatOutput thermostat(double value, double lo, double hi, double h, bool prev_heat,
                                          bool prev_cool);

struct Decision {
    ControlState state;
    std::vector<RelayCommand> commands;
    std::vector<Notification> notes;
};

[[nodiscard]] bool in_day_window(double now, const LightRule& rule);

/// Applies every rule to one telemetry frame for `zone`.
[[nodiscard]] Decision evaluate(const proto::TelemetryFrame& frame, std::size_t zone, const ThresholdConfig& cfg,
                                ControlState st, double now);

/// Counts pump timers down by dt and switches expired pumps off. Zones in
/// `skip` had their timer armed during this tick and are left alone.
[[nodiscard]] Decision advance_timers(ControlState st, double dt, const std::vector<std::size_t>& skip = {});

// Watchdog --------------------------------------------------------------------

struct WatchdogState {
    std::optional<proto::TelemetryFrame> last_frame;
    int repeat_count = 0;
    double last_seen_ts = 0.0;
    bool alerted = false;
};

inline constexpr const char* kStuckMessage = "bot stuck";
inline constexpr const char* kFertilizerMessage = "fertilizer required";

/// True when every sensor field of b is within eps of a and the checkpoint matches.
[[nodiscard]] bool unchanged(const proto::TelemetryFrame& a, const proto::TelemetryFrame& b, int eps);

struct WatchdogResult {
    WatchdogState state;
    std::optional<Notification> alert;
};

/// Feed a frame, or nullptr on a tick with no frame to run the silence check.
[[nodiscard]] WatchdogResult watchdog_step(WatchdogState wd, const proto::TelemetryFrame* frame, double now,
                                           const WatchdogConfig& cfg);

// Persistence -----------------------------------------------------------------

/// Append-only JSONL sink. Each record is {"rx_ts", "kind", "body"}.
class LogSink {
public:
    virtual ~LogSink() = default;
    /// Returns false when the record could not be written.
    virtual bool append(const nlohmann::ordered_json& record) = 0;
};

class JsonlFileSink final : public LogSink {
public:
    explicit JsonlFileSink(const std::string& path);
    bool append(const nlohmann::ordered_json& record) override;

private:
    std::ofstream out_;
};

class MemorySink final : public LogSink {
public:
    bool append(const nlohmann::ordered_json& record) override {
        records.push_back(record);
        return true;
    }
    std::vector<nlohmann::ordered_json> records;
};

[[nodiscard]] nlohmann::ordered_json make_record(double rx_ts, const std::string& kind,
                                                 nlohmann::ordered_json body);

/// Appends one record; false on sink failure.
bool persist(LogSink& sink, double rx_ts, const std::string& kind, nlohmann::ordered_json body);

} // namespace agri::control

#endif // AGRIBOT_CONTROLLER_HPP
