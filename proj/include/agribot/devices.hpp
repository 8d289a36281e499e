// SPDX-License-Identifier: Apache-2.0

// Sensor, relay, motor-driver and battery models. These sit between the
// continuous simulated world and the quantized values the bot firmware sees.

#ifndef AGRIBOT_DEVICES_HPP
#define AGRIBOT_DEVICES_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

namespace agri::devices {

/// Board figures quoted for the Arduino Uno controller. Informational only.
namespace board {
inline constexpr double kOperatingVolts = 5.0;
inline constexpr double kInputVoltsMin = 7.0;
inline constexpr double kInputVoltsMax = 10.0;
inline constexpr int kDigitalPins = 14;
inline constexpr int kAnalogPins = 8;
inline constexpr int kFlashKiB = 32;
} // namespace board

inline constexpr int kAdcMax = 1023;
inline constexpr double kAdcSpanMv = 5000.0;
inline constexpr double kLm35MvPerDegC = 10.0;
inline constexpr double kHBridgeLimitA = 0.6;

struct AdcReading {
    int counts = 0;
    auto operator<=>(const AdcReading&) const = default;
};

enum class DigitalLevel { low, high };

struct DhtReading {
    int temp_c;
    int humidity_pct;
    bool operator==(const DhtReading&) const = default;
};

/// LM35 at 10 mV/degC into a 10-bit, 0-5 V converter.
[[nodiscard]] AdcReading lm35_adc(double temp_c);

/// Inverse of lm35_adc up to quantization.
[[nodiscard]] double lm35_celsius(AdcReading r);

/// Integer-truncated DHT11 reading; nullopt outside 0-50 degC / 20-90 %RH.
[[nodiscard]] std::optional<DhtReading> dht11_read(double temp_c, double humidity_pct);

/// AR-65 comparator output. Ties read wet.
[[nodiscard]] DigitalLevel ar65_read(double moisture, double threshold);

[[nodiscard]] AdcReading light_adc(double lux, double full_scale_lux);

[[nodiscard]] AdcReading ph_adc(double ph);
[[nodiscard]] double ph_from_counts(AdcReading r);

// Relays ---------------------------------------------------------------------

struct RelayChannel {
    bool commanded = false;
    bool actual = false;
    double settle_remaining_s = 0.0;
    bool operator==(const RelayChannel&) const = default;
};

struct RelayBank {
    std::vector<RelayChannel> channels;
    double settle_s = 0.01;

    RelayBank() = default;
    RelayBank(std::size_t n, double settle) : channels(n), settle_s(settle) {}
    bool operator==(const RelayBank&) const = default;
};

/// Latches a new command. Throws std::out_of_range for an unknown channel.
[[nodiscard]] RelayBank relay_set(RelayBank bank, std::size_t channel, bool on);

/// Advances coil settle timers; contacts follow the last command once settled.
[[nodiscard]] RelayBank relay_tick(RelayBank bank, double dt);

// Motor driver ---------------------------------------------------------------

enum class Direction { stop, forward, reverse };

inline constexpr std::size_t kMotors = 4;

/// Motors 0,1 drive the left track and 2,3 the right.
using MotorCommand = std::array<Direction, kMotors>;
using MotorLoads = std::array<double, kMotors>;

struct MotorOutput {
    std::array<int, kMotors> speed{};
    bool operator==(const MotorOutput&) const = default;
};

struct DriverFault {
    std::size_t motor;
    double load_a;
};

using DriveResult = std::variant<MotorOutput, DriverFault>;

/// L293D quad half-bridge. Any running motor above 600 mA trips the driver
/// and every output stops.
[[nodiscard]] DriveResult hbridge_drive(const MotorCommand& cmd, const MotorLoads& load_a);

[[nodiscard]] MotorCommand tracks_to_motors(int left, int right);

// Battery --------------------------------------------------------------------

enum class PowerMode { idle, driving, stalled };

struct Battery {
    double charge_frac = 1.0;
    double capacity_as = 180000.0;
    double idle_draw_a = 0.1;
    double drive_draw_a = 0.6;
    double stall_draw_a = 1.5;

    [[nodiscard]] double draw(PowerMode m) const;
    bool operator==(const Battery&) const = default;
};

[[nodiscard]] Battery battery_step(Battery b, PowerMode mode, double dt);

} // namespace agri::devices

#endif // AGRIBOT_DEVICES_HPP
