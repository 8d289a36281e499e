// SPDX-License-Identifier: Apache-2.0

// The patrol robot: drive-pin decoding, the navigation state machine,
// checkpoint sampling and the mud/stuck model.

#ifndef AGRIBOT_BOT_HPP
#define AGRIBOT_BOT_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "agribot/climate.hpp"
#include "agribot/devices.hpp"
#include "agribot/protocol.hpp"

namespace agri::bot {

enum class Mode { manual, automatic };
enum class Phase { moving, sampling, stuck, fault };
enum class StuckEmits { repeat, silent };

const char* to_string(Mode m);
const char* to_string(Phase p);

struct GridCoord {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const GridCoord&) const = default;
};

/// Closed loop of checkpoints; leg i runs from checkpoint i to i+1 (mod n).
struct PathPlan {
    std::vector<GridCoord> checkpoints;
    double segment_length_m = 10.0;
    double speed_mps = 0.5;
    double dwell_s = 5.0;

    [[nodiscard]] std::size_t size() const { return checkpoints.size(); }
    [[nodiscard]] double leg_time_s() const { return segment_length_m / speed_mps + dwell_s; }
};

/// Boustrophedon walk over every zone of a rows x cols grid.
[[nodiscard]] std::vector<GridCoord> serpentine(std::size_t rows, std::size_t cols);

struct MudModel {
    double mud_threshold = 0.9;
    double p_stuck = 0.0; // per second while on wet ground
};

struct MotorCurrents {
    double drive_a = 0.3;
    double stall_a = 0.9;
};

/// Virtual pins reserved for the drive pad.
enum class DrivePin : int { left = 0, right = 1, forward = 2, backward = 3 };

struct DriveCommand {
    int left = 0;
    int right = 0;
    bool operator==(const DriveCommand&) const = default;
};

using PinState = std::array<bool, 4>;

struct BotState {
    Mode mode = Mode::automatic;
    Phase phase = Phase::moving;
    std::size_t segment_index = 0;
    double progress_m = 0.0;
    double dwell_remaining_s = 0.0;
    bool stuck = false;
    std::optional<std::size_t> faulted_motor;
    std::int64_t seq = 0; // sequence number of the next frame
    devices::Battery battery;
    PinState pins{};
    DriveCommand drive;
    double motor_load_a = 0.0;

    bool operator==(const BotState&) const = default;
};

enum class EventKind { sample_due, stuck, driver_fault, rescued, rescue_ignored, mode_changed };

const char* to_string(EventKind k);

struct Event {
    EventKind kind;
    std::size_t checkpoint = 0;
    bool operator==(const Event&) const = default;
};

/// Uniform draws in [0, 1) from a 64-bit Mersenne Twister. The double
/// conversion is done here so traces match across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

/// Independent stream for one named stochastic consumer.
[[nodiscard]] Rng stream_for(std::uint64_t run_seed, std::string_view consumer);

/// Drive command implied by the held pins (priority forward > backward > left > right).
[[nodiscard]] DriveCommand drive_from_pins(const PinState& pins);

/// Applies one pin edge. Throws std::out_of_range for pins other than 0-3.
[[nodiscard]] std::pair<PinState, DriveCommand> handle_vpin(int pin, int val, PinState current);

struct StepResult {
    BotState bot;
    std::vector<Event> events;
};

/// Checkpoint the bot is nearest to on its current leg.
[[nodiscard]] std::size_t nearest_checkpoint(const BotState& bot, const PathPlan& plan);

/// One tick of the navigation state machine. `zone_under_bot` feeds the mud check.
[[nodiscard]] StepResult fsm_step(BotState bot, const PathPlan& plan, const climate::ZoneState& zone_under_bot,
                                  const MudModel& mud, const MotorCurrents& motors, Rng& rng, double dt);

struct SensorConfig {
    double ar65_threshold = 0.3;
    double light_full_scale_lux = 50000.0;
};

/// Reads every sensor against `zone` and stamps the next sequence number.
[[nodiscard]] std::pair<BotState, proto::TelemetryFrame> sample_checkpoint(BotState bot, std::size_t checkpoint,
                                                                           const climate::ZoneState& zone,
                                                                           const SensorConfig& sensors, double t);

[[nodiscard]] BotState set_mode(BotState bot, Mode mode);

/// Clears STUCK/FAULT. Anywhere else it is a no-op with a rescue_ignored event.
[[nodiscard]] StepResult rescue(BotState bot, const MotorCurrents& motors);

/// Marks the bot stuck in place (scripted scenarios).
[[nodiscard]] BotState force_stuck(BotState bot, const MotorCurrents& motors);

} // namespace agri::bot

#endif // AGRIBOT_BOT_HPP
