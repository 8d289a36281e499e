// SPDX-License-Identifier: Apache-2.0

#include "agribot/bot.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace agri::bot {

namespace {

constexpr double kTimeEps = 1e-9;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x00000100000001b3ull;
    }
    return h;
}

devices::MotorLoads uniform_load(double a) {
    return {a, a, a, a};
}

} // namespace

const char* to_string(Mode m) {
    return m == Mode::manual ? "manual" : "auto";
}

const char* to_string(Phase p) {
    switch (p) {
    case Phase::moving: return "moving";
    case Phase::sampling: return "sampling";
    case Phase::stuck: return "stuck";
    case Phase::fault: return "fault";
    }
    return "?";
}

const char* to_string(EventKind k) {
    switch (k) {
    case EventKind::sample_due: return "sample_due";
    case EventKind::stuck: return "stuck";
    case EventKind::driver_fault: return "driver_fault";
    case EventKind::rescued: return "rescued";
    case EventKind::rescue_ignored: return "rescue_ignored";
    case EventKind::mode_changed: return "mode_changed";
    }
    return "?";
}

std::vector<GridCoord> serpentine(std::size_t rows, std::size_t cols) {
    std::vector<GridCoord> out;
    out.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < cols; ++i) {
            out.push_back({r, r % 2 == 0 ? i : cols - 1 - i});
        }
    }
    return out;
}

Rng stream_for(std::uint64_t run_seed, std::string_view consumer) {
    return Rng(splitmix64(run_seed ^ fnv1a(consumer)));
}

DriveCommand drive_from_pins(const PinState& pins) {
    if (pins[static_cast<int>(DrivePin::forward)]) return {1, 1};
    if (pins[static_cast<int>(DrivePin::backward)]) return {-1, -1};
    if (pins[static_cast<int>(DrivePin::left)]) return {-1, 1};
    if (pins[static_cast<int>(DrivePin::right)]) return {1, -1};
    return {0, 0};
}

std::pair<PinState, DriveCommand> handle_vpin(int pin, int val, PinState current) {
    if (pin < 0 || pin > 3) {
        throw std::out_of_range("virtual pin " + std::to_string(pin) + " is not a drive pin");
    }
    current[static_cast<std::size_t>(pin)] = val != 0;
    return {current, drive_from_pins(current)};
}

std::size_t nearest_checkpoint(const BotState& bot, const PathPlan& plan) {
    const std::size_t n = plan.size();
    return bot.progress_m * 2.0 >= plan.segment_length_m ? (bot.segment_index + 1) % n : bot.segment_index;
}

StepResult fsm_step(BotState bot, const PathPlan& plan, const climate::ZoneState& zone_under_bot,
                    const MudModel& mud, const MotorCurrents& motors, Rng& rng, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("fsm_step needs dt > 0");
    }
    if (plan.checkpoints.empty()) {
        throw std::invalid_argument("path has no checkpoints");
    }
    StepResult r;
    const std::size_t n = plan.size();
    const double leg = plan.segment_length_m;

    if (bot.phase == Phase::stuck) {
        bot.battery = devices::battery_step(bot.battery, devices::PowerMode::stalled, dt);
        r.bot = bot;
        return r;
    }
    if (bot.phase == Phase::fault) {
        bot.battery = devices::battery_step(bot.battery, devices::PowerMode::idle, dt);
        r.bot = bot;
        return r;
    }

    const bool automatic = bot.mode == Mode::automatic;
    const bool driving = automatic ? bot.phase == Phase::moving : (bot.drive.left != 0 || bot.drive.right != 0);
    const devices::MotorCommand cmd =
        automatic ? devices::tracks_to_motors(1, 1) : devices::tracks_to_motors(bot.drive.left, bot.drive.right);

    if (driving && zone_under_bot.moisture > mud.mud_threshold && rng.uniform() < mud.p_stuck * dt) {
        bot.stuck = true;
        bot.phase = Phase::stuck;
        bot.motor_load_a = motors.stall_a;
        r.events.push_back({EventKind::stuck, nearest_checkpoint(bot, plan)});
        // Stalled wheels pull stall current through the driver.
        const auto stalled = devices::hbridge_drive(cmd, uniform_load(motors.stall_a));
        if (const auto* f = std::get_if<devices::DriverFault>(&stalled)) {
            bot.faulted_motor = f->motor;
            r.events.push_back({EventKind::driver_fault, nearest_checkpoint(bot, plan)});
        }
        bot.battery = devices::battery_step(bot.battery, devices::PowerMode::stalled, dt);
        r.bot = bot;
        return r;
    }

    if (driving) {
        const auto out = devices::hbridge_drive(cmd, uniform_load(motors.drive_a));
        if (const auto* f = std::get_if<devices::DriverFault>(&out)) {
            bot.phase = Phase::fault;
            bot.faulted_motor = f->motor;
            bot.motor_load_a = 0.0;
            r.events.push_back({EventKind::driver_fault, nearest_checkpoint(bot, plan)});
            bot.battery = devices::battery_step(bot.battery, devices::PowerMode::idle, dt);
            r.bot = bot;
            return r;
        }
        bot.motor_load_a = motors.drive_a;
    } else {
        bot.motor_load_a = 0.0;
    }

    if (automatic) {
        // Spend the tick's time budget across arrivals and dwell ends so lap
        // timing does not drift when legs are not a whole number of ticks.
        double budget = dt;
        for (std::size_t guard = 0; budget > 1e-12 && guard < 4 * n + 4; ++guard) {
            if (bot.phase == Phase::moving) {
                const double need = (leg - bot.progress_m) / plan.speed_mps;
                if (need > budget + kTimeEps) {
                    bot.progress_m += plan.speed_mps * budget;
                    budget = 0.0;
                } else {
                    budget -= std::max(need, 0.0);
                    bot.progress_m = leg;
                    const std::size_t cp = (bot.segment_index + 1) % n;
                    r.events.push_back({EventKind::sample_due, cp});
                    if (plan.dwell_s > 0.0) {
                        bot.phase = Phase::sampling;
                        bot.dwell_remaining_s = plan.dwell_s;
                    } else {
                        bot.segment_index = cp;
                        bot.progress_m = 0.0;
                    }
                }
            } else {
                if (bot.dwell_remaining_s > budget + kTimeEps) {
                    bot.dwell_remaining_s -= budget;
                    budget = 0.0;
                } else {
                    budget -= bot.dwell_remaining_s;
                    bot.dwell_remaining_s = 0.0;
                    bot.phase = Phase::moving;
                    bot.segment_index = (bot.segment_index + 1) % n;
                    bot.progress_m = 0.0;
                }
            }
        }
    } else {
        // Manual driving collapses both tracks onto path progress; turning is in place.
        const double along = (bot.drive.left + bot.drive.right) / 2.0;
        bot.progress_m += plan.speed_mps * along * dt;
        while (bot.progress_m >= leg) {
            bot.progress_m -= leg;
            bot.segment_index = (bot.segment_index + 1) % n;
        }
        if (bot.progress_m < 0.0) {
            bot.progress_m = 0.0;
        }
    }

    bot.battery =
        devices::battery_step(bot.battery, driving ? devices::PowerMode::driving : devices::PowerMode::idle, dt);
    r.bot = bot;
    return r;
}

std::pair<BotState, proto::TelemetryFrame> sample_checkpoint(BotState bot, std::size_t checkpoint,
                                                             const climate::ZoneState& zone,
                                                             const SensorConfig& sensors, double t) {
    proto::TelemetryFrame f;
    f.seq = bot.seq++;
    f.checkpoint = static_cast<int>(checkpoint);
    f.ts = t;
    f.temp_counts = devices::lm35_adc(zone.temp_c).counts;
    if (auto dht = devices::dht11_read(zone.temp_c, zone.humidity_pct)) {
        f.dht = std::array<int, 2>{dht->temp_c, dht->humidity_pct};
    }
    f.light_counts = devices::light_adc(zone.light_lux, sensors.light_full_scale_lux).counts;
    f.moisture_high = devices::ar65_read(zone.moisture, sensors.ar65_threshold) == devices::DigitalLevel::high;
    f.ph_counts = devices::ph_adc(zone.ph).counts;
    f.battery_frac = bot.battery.charge_frac;
    return {bot, f};
}

BotState set_mode(BotState bot, Mode mode) {
    if (bot.mode == mode) {
        return bot;
    }
    bot.mode = mode;
    bot.pins = {};
    bot.drive = {};
    if (mode == Mode::manual && bot.phase == Phase::sampling) {
        // Already sampled here; the manual kinematics roll over onto the next leg.
        bot.phase = Phase::moving;
        bot.dwell_remaining_s = 0.0;
    }
    return bot;
}

StepResult rescue(BotState bot, const MotorCurrents& motors) {
    StepResult r;
    if (bot.phase != Phase::stuck && bot.phase != Phase::fault) {
        r.events.push_back({EventKind::rescue_ignored, 0});
        r.bot = bot;
        return r;
    }
    bot.stuck = false;
    bot.faulted_motor.reset();
    bot.phase = Phase::moving;
    bot.motor_load_a = motors.drive_a;
    r.events.push_back({EventKind::rescued, 0});
    r.bot = bot;
    return r;
}

BotState force_stuck(BotState bot, const MotorCurrents& motors) {
    bot.stuck = true;
    bot.phase = Phase::stuck;
    bot.motor_load_a = motors.stall_a;
    bot.dwell_remaining_s = 0.0;
    return bot;
}

} // namespace agri::bot
