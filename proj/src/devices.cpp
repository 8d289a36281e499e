// SPDX-License-Identifier: Apache-2.0

#include "agribot/devices.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace agri::devices {

namespace {

AdcReading quantize(double fraction) {
    const double counts = std::round(fraction * kAdcMax);
    return {static_cast<int>(std::clamp(counts, 0.0, static_cast<double>(kAdcMax)))};
}

} // namespace

AdcReading lm35_adc(double temp_c) {
    const double mv = kLm35MvPerDegC * temp_c;
    if (!(mv > 0.0)) {
        return {0};
    }
    return quantize(mv / kAdcSpanMv);
}

double lm35_celsius(AdcReading r) {
    return r.counts * kAdcSpanMv / kAdcMax / kLm35MvPerDegC;
}

std::optional<DhtReading> dht11_read(double temp_c, double humidity_pct) {
    if (!(temp_c >= 0.0 && temp_c <= 50.0) || !(humidity_pct >= 20.0 && humidity_pct <= 90.0)) {
        return std::nullopt;
    }
    return DhtReading{static_cast<int>(std::trunc(temp_c)), static_cast<int>(std::trunc(humidity_pct))};
}

DigitalLevel ar65_read(double moisture, double threshold) {
    return moisture >= threshold ? DigitalLevel::high : DigitalLevel::low;
}

AdcReading light_adc(double lux, double full_scale_lux) {
    if (!(full_scale_lux > 0.0)) {
        throw std::invalid_argument("light full scale must be positive");
    }
    return quantize(std::min(std::max(lux, 0.0), full_scale_lux) / full_scale_lux);
}

AdcReading ph_adc(double ph) {
    if (!(ph >= 0.0 && ph <= 14.0)) {
        throw std::invalid_argument("pH outside 0-14");
    }
    return quantize(ph / 14.0);
}

double ph_from_counts(AdcReading r) {
    return r.counts * 14.0 / kAdcMax;
}

RelayBank relay_set(RelayBank bank, std::size_t channel, bool on) {
    if (channel >= bank.channels.size()) {
        throw std::out_of_range("relay channel " + std::to_string(channel) + " not configured");
    }
    RelayChannel& ch = bank.channels[channel];
    ch.commanded = on;
    ch.settle_remaining_s = bank.settle_s;
    if (bank.settle_s <= 0.0) {
        ch.settle_remaining_s = 0.0;
        ch.actual = on;
    }
    return bank;
}

RelayBank relay_tick(RelayBank bank, double dt) {
    for (RelayChannel& ch : bank.channels) {
        if (ch.settle_remaining_s > 0.0) {
            ch.settle_remaining_s -= dt;
            if (ch.settle_remaining_s <= 1e-12) {
                ch.settle_remaining_s = 0.0;
            }
        }
        if (ch.settle_remaining_s == 0.0) {
            ch.actual = ch.commanded;
        }
    }
    return bank;
}

DriveResult hbridge_drive(const MotorCommand& cmd, const MotorLoads& load_a) {
    MotorOutput out;
    for (std::size_t i = 0; i < kMotors; ++i) {
        if (cmd[i] == Direction::stop) {
            continue;
        }
        if (load_a[i] < 0.0) {
            throw std::invalid_argument("negative motor load");
        }
        if (load_a[i] > kHBridgeLimitA) {
            return DriverFault{i, load_a[i]};
        }
        out.speed[i] = cmd[i] == Direction::forward ? 1 : -1;
    }
    return out;
}

MotorCommand tracks_to_motors(int left, int right) {
    auto dir = [](int v) {
        return v > 0 ? Direction::forward : v < 0 ? Direction::reverse : Direction::stop;
    };
    return {dir(left), dir(left), dir(right), dir(right)};
}

double Battery::draw(PowerMode m) const {
    switch (m) {
    case PowerMode::idle: return idle_draw_a;
    case PowerMode::driving: return drive_draw_a;
    case PowerMode::stalled: return stall_draw_a;
    }
    return 0.0;
}

Battery battery_step(Battery b, PowerMode mode, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("battery step needs dt > 0");
    }
    b.charge_frac = std::max(0.0, b.charge_frac - b.draw(mode) * dt / b.capacity_as);
    return b;
}

} // namespace agri::devices
