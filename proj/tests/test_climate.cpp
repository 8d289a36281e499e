// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "agribot/climate.hpp"

using namespace agri::climate;

namespace {

AmbientProfile profile() {
    AmbientProfile p;
    p.light_peak_lux = 50000.0;
    p.day_length_s = 43200.0;
    p.period_s = 86400.0;
    return p;
}

ModelParams zeroed() {
    ModelParams p;
    p.k_amb = p.k_nbr = p.heat_rate = p.fan_cool_gain = p.fan_cool_rate = 0.0;
    p.irr_rate = p.dry_rate = p.dry_temp_gain = p.evap_h_rate = p.vent_rate = 0.0;
    p.lamp_lux = 0.0;
    p.shade_factor = 1.0;
    p.ph_drift = 0.0;
    return p;
}

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}
    double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    bool coin() { return std::uniform_int_distribution<int>(0, 1)(rng) == 1; }

    ZoneState zone(double spread) {
        return {uni(-spread, spread), uni(-spread, 100 + spread), uni(-spread, 1e5), uni(-1, 2), uni(-3, 17)};
    }
    ZoneActuators act() { return {coin(), coin(), coin(), coin()}; }
    ModelParams params() {
        ModelParams p;
        p.k_amb = uni(0, 1e-3);
        p.k_nbr = uni(0, 1e-3);
        p.heat_rate = uni(0, 1e-2);
        p.fan_cool_gain = uni(0, 2);
        p.fan_cool_rate = uni(0, 1e-2);
        p.irr_rate = uni(0, 1e-3);
        p.dry_rate = uni(0, 1e-4);
        p.dry_temp_gain = uni(0, 0.1);
        p.evap_h_rate = uni(0, 1e-2);
        p.vent_rate = uni(0, 1e-2);
        p.lamp_lux = uni(0, 20000);
        p.shade_factor = uni(0.01, 1.0);
        p.ph_drift = uni(-1e-4, 1e-4);
        return p;
    }
};

} // namespace

TEST_CASE("ambient light follows a half sine inside the day window") {
    const auto p = profile();
    CHECK(ambient_light(p.day_length_s / 2, p) == doctest::Approx(50000.0).epsilon(1e-12));
    CHECK(ambient_light(p.day_length_s + 1, p) == 0.0);
    // Independent evaluation of 50000 * sin(pi/6).
    const double expected = 50000.0 * std::sin(std::acos(-1.0) / 6.0);
    CHECK(expected == doctest::Approx(25000.0));
    CHECK(ambient_light(p.day_length_s / 6, p) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(ambient_light(p.period_s + p.day_length_s / 2, p) == doctest::Approx(50000.0));
}

TEST_CASE("ambient temperature swings around the mean") {
    auto p = profile();
    p.temp_c = 20.0;
    p.temp_swing_c = 5.0;
    CHECK(ambient_at(0.0, p).temp_c == doctest::Approx(20.0));
    CHECK(ambient_at(p.period_s / 4, p).temp_c == doctest::Approx(25.0));
    p.temp_swing_c = 0.0;
    CHECK(ambient_at(p.period_s / 4, p).temp_c == 20.0);
}

TEST_CASE("step_zone examples") {
    ModelParams p;
    p.ph_drift = 0.0;
    const AmbientNow amb{20.0, 50.0, 10000.0};

    SUBCASE("fixed point with every actuator off") {
        const ZoneState z{20.0, 50.0, p.shade_factor * 10000.0, 0.0, 7.0};
        const std::vector<ZoneState> nbr(3, z);
        CHECK(step_zone(z, nbr, {}, amb, p, 1.0) == z);
    }
    SUBCASE("heater adds exactly dt*heat_rate") {
        const ZoneState z{15.0, 60.0, 0.0, 0.4, 6.0};
        ZoneActuators on;
        on.heater = true;
        const double dt = 2.5;
        const double diff = step_zone(z, {}, on, amb, p, dt).temp_c - step_zone(z, {}, {}, amb, p, dt).temp_c;
        CHECK(diff == doctest::Approx(dt * p.heat_rate).epsilon(1e-12));
    }
    SUBCASE("hand-evaluated heater step") {
        auto q = zeroed();
        q.k_amb = 0.001;
        q.heat_rate = 0.02;
        ZoneActuators on;
        on.heater = true;
        const ZoneState z{10.0, 50.0, 0.0, 0.5, 7.0};
        // 10 + 1 * (0.001 * (10 - 10) + 0.02) = 10.02
        CHECK(step_zone(z, {}, on, {10.0, 50.0, 0.0}, q, 1.0).temp_c == doctest::Approx(10.02).epsilon(1e-14));
    }
    SUBCASE("fan pulls toward ambient faster and cools") {
        const ZoneState z{30.0, 70.0, 0.0, 0.5, 7.0};
        ZoneActuators fan;
        fan.fan = true;
        const auto off = step_zone(z, {}, {}, amb, p, 1.0);
        const auto on = step_zone(z, {}, fan, amb, p, 1.0);
        CHECK(on.temp_c < off.temp_c);
        CHECK(on.humidity_pct < off.humidity_pct);
    }
    SUBCASE("rejects non-finite input") {
        ZoneState z;
        z.temp_c = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS((void)step_zone(z, {}, {}, amb, p, 1.0), ModelError);
        CHECK_THROWS_AS((void)step_zone({}, {}, {}, {INFINITY, 50, 0}, p, 1.0), ModelError);
        CHECK_THROWS_AS((void)step_zone({}, {}, {}, amb, p, 0.0), ModelError);
    }
}

TEST_CASE("step_greenhouse examples") {
    ModelParams p;
    const AmbientNow amb{12.0, 40.0, 3000.0};

    SUBCASE("1x1 grid equals a lone step_zone") {
        const ZoneState z{18.0, 55.0, 100.0, 0.3, 6.5};
        Greenhouse g(1, 1, z);
        ActuatorBank act(1);
        act[0].heater = true;
        act[0].lamp = true;
        CHECK(step_greenhouse(g, act, p, amb, 1.0)[0] == step_zone(z, {}, act[0], amb, p, 1.0));
    }
    SUBCASE("uniform grid stays uniform") {
        Greenhouse g(3, 4, {25.0, 60.0, 0.0, 0.5, 7.0});
        ActuatorBank act(12, {true, false, true, false});
        for (int k = 0; k < 50; ++k) {
            g = step_greenhouse(g, act, p, amb, 1.0);
        }
        for (const auto& z : g.zones()) {
            CHECK(z == g[0]);
        }
    }
    SUBCASE("two zones exchange heat symmetrically") {
        auto q = zeroed();
        q.k_nbr = 5e-5;
        Greenhouse g(2, 1, {20.0, 50.0, 0.0, 0.5, 7.0});
        g[0].temp_c = 30.0;
        const double dt = 1.0;
        const auto next = step_greenhouse(g, ActuatorBank(2), q, AmbientNow{20.0, 50.0, 0.0}, dt);
        const double expected = dt * q.k_nbr * 10.0;
        CHECK(30.0 - next[0].temp_c == doctest::Approx(expected).epsilon(1e-9));
        CHECK(next[1].temp_c - 20.0 == doctest::Approx(expected).epsilon(1e-9));
    }
    SUBCASE("errors carry the zone coordinate") {
        // Neighbours read the bad zone too, so corrupt the first one in scan order.
        Greenhouse g(2, 2);
        g.at(0, 0).humidity_pct = std::numeric_limits<double>::infinity();
        try {
            (void)step_greenhouse(g, ActuatorBank(4), p, amb, 1.0);
            FAIL("expected ModelError");
        } catch (const ModelError& e) {
            CHECK(std::string(e.what()).find("zone (0,0)") != std::string::npos);
        }
        CHECK_THROWS_AS((void)step_greenhouse(g, ActuatorBank(3), p, amb, 1.0), ModelError);
    }
}

TEST_CASE("grid topology is 4-connected and non-periodic") {
    Greenhouse g(3, 3);
    CHECK(g.neighbors(0).size() == 2);
    CHECK(g.neighbors(1).size() == 3);
    CHECK(g.neighbors(4).size() == 4);
    Greenhouse line(1, 5);
    CHECK(line.neighbors(0) == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(Greenhouse(0, 3), ModelError);
}

TEST_CASE("stability bound") {
    ModelParams p;
    CHECK(p.stable_for(1.0));
    CHECK(p.stable_for(1.0 / p.stiffness()));
    CHECK_FALSE(p.stable_for(1.0 / p.stiffness() * 1.01));
}

TEST_CASE("property: clamped outputs respect the zone ranges") {
    Gen gen(1);
    for (int i = 0; i < 5000; ++i) {
        const auto p = gen.params();
        const double dt = gen.uni(0.01, 0.99 / p.stiffness());
        std::vector<ZoneState> nbr;
        for (int n = static_cast<int>(gen.uni(0, 4.99)); n > 0; --n) {
            nbr.push_back(gen.zone(200));
        }
        const auto out = step_zone(gen.zone(200), nbr, gen.act(), {gen.uni(-40, 60), gen.uni(0, 100), gen.uni(0, 1e5)},
                                   p, dt);
        REQUIRE(std::isfinite(out.temp_c));
        CHECK(out.humidity_pct >= 0.0);
        CHECK(out.humidity_pct <= 100.0);
        CHECK(out.moisture >= 0.0);
        CHECK(out.moisture <= 1.0);
        CHECK(out.ph >= 0.0);
        CHECK(out.ph <= 14.0);
        CHECK(out.light_lux >= 0.0);
    }
}

TEST_CASE("property: fixed point holds over many steps") {
    Gen gen(2);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = gen.params();
        p.ph_drift = 0.0;
        const AmbientNow amb{gen.uni(0, 40), gen.uni(10, 90), gen.uni(0, 60000)};
        const ZoneState rest{amb.temp_c, amb.humidity_pct, p.shade_factor * amb.lux, 0.0, gen.uni(4, 9)};
        Greenhouse g(3, 3, rest);
        for (int k = 0; k < 20000; ++k) {
            const auto next = step_greenhouse(g, ActuatorBank(9), p, amb, 1.0);
            for (std::size_t i = 0; i < 9; ++i) {
                REQUIRE(std::abs(next[i].temp_c - g[i].temp_c) <= 1e-12);
                REQUIRE(std::abs(next[i].humidity_pct - g[i].humidity_pct) <= 1e-12);
                REQUIRE(std::abs(next[i].light_lux - g[i].light_lux) <= 1e-12);
            }
            g = next;
        }
    }
}

TEST_CASE("property: actuators are monotone before clamping") {
    Gen gen(3);
    for (int i = 0; i < 5000; ++i) {
        const auto p = gen.params();
        const auto z = gen.zone(50);
        const AmbientNow amb{gen.uni(-10, 45), gen.uni(0, 100), gen.uni(0, 1e5)};
        auto base = gen.act();
        const double dt = gen.uni(0.1, 10);
        auto with = [&](auto member, bool v) {
            auto a = base;
            a.*member = v;
            return step_zone_raw(z, {}, a, amb, p, dt);
        };
        CHECK(with(&ZoneActuators::heater, true).temp_c >= with(&ZoneActuators::heater, false).temp_c);
        CHECK(with(&ZoneActuators::pump, true).moisture >= with(&ZoneActuators::pump, false).moisture);
        CHECK(with(&ZoneActuators::lamp, true).light_lux >= with(&ZoneActuators::lamp, false).light_lux);
    }
}

TEST_CASE("property: zone evaluation order does not matter") {
    Gen gen(4);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = gen.params();
        Greenhouse g(3, 4);
        ActuatorBank act(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = clamp(gen.zone(30));
            act[i] = gen.act();
        }
        const AmbientNow amb{gen.uni(0, 40), gen.uni(0, 100), gen.uni(0, 1e5)};
        const auto expected = step_greenhouse(g, act, p, amb, 1.0);

        std::vector<std::size_t> order(g.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), gen.rng);
        Greenhouse manual = g;
        for (std::size_t i : order) {
            std::vector<ZoneState> nbr;
            for (std::size_t j : g.neighbors(i)) {
                nbr.push_back(g[j]);
            }
            manual[i] = step_zone(g[i], nbr, act[i], amb, p, 1.0);
        }
        CHECK(manual == expected);
    }
}

TEST_CASE("property: drift bound with actuators off") {
    Gen gen(5);
    for (int i = 0; i < 5000; ++i) {
        const auto p = gen.params();
        const auto z = clamp(gen.zone(40));
        std::vector<ZoneState> nbr;
        double nbr_sum = 0.0;
        for (int n = 0; n < 4; ++n) {
            nbr.push_back(clamp(gen.zone(40)));
            nbr_sum += std::abs(nbr.back().temp_c - z.temp_c);
        }
        const AmbientNow amb{gen.uni(-10, 45), gen.uni(0, 100), 0.0};
        const double dt = gen.uni(0.1, 5);
        const double moved = std::abs(step_zone(z, nbr, {}, amb, p, dt).temp_c - z.temp_c);
        const double bound = dt * (p.k_amb * std::abs(amb.temp_c - z.temp_c) + p.k_nbr * nbr_sum);
        CHECK(moved <= bound * (1 + 1e-12) + 1e-12);
    }
}
