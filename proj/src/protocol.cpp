// SPDX-License-Identifier: Apache-2.0

#include "agribot/protocol.hpp"

#include <cmath>

namespace agri::proto {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ProtocolError(code::missing_field, std::string("missing field '") + key + "'");
    }
    return *it;
}

[[noreturn]] void bad_type(const char* key, const char* want) {
    throw ProtocolError(code::bad_type, std::string("field '") + key + "' must be " + want);
}

std::int64_t get_int(const json& j, const char* key, std::int64_t lo, std::int64_t hi) {
    const json& v = require(j, key);
    if (!v.is_number_integer()) {
        bad_type(key, "an integer");
    }
    std::int64_t x = 0;
    if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(hi)) {
            bad_type(key, "in range");
        }
        x = static_cast<std::int64_t>(u);
    } else {
        x = v.get<std::int64_t>();
    }
    if (x < lo || x > hi) {
        bad_type(key, "in range");
    }
    return x;
}

int counts(const json& j, const char* key) {
    return static_cast<int>(get_int(j, key, 0, 1023));
}

double get_number(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_number()) {
        bad_type(key, "a number");
    }
    return v.get<double>();
}

std::string get_string(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) {
        bad_type(key, "a string");
    }
    return v.get<std::string>();
}

Subscription parse_sub(const json& j) {
    Subscription sub;
    if (!j.is_object()) {
        bad_type("sub", "an object");
    }
    if (auto it = j.find("pins"); it != j.end()) {
        if (!it->is_array()) {
            bad_type("pins", "an array");
        }
        for (const json& p : *it) {
            if (!p.is_number_integer() || p.get<std::int64_t>() < 0 || p.get<std::int64_t>() > kMaxPin) {
                bad_type("pins", "integers 0-255");
            }
            sub.pins.push_back(p.get<int>());
        }
    }
    if (auto it = j.find("tele"); it != j.end()) {
        if (!it->is_boolean()) {
            bad_type("tele", "a boolean");
        }
        sub.tele = it->get<bool>();
    }
    return sub;
}

TelemetryFrame parse_tele(const json& j) {
    TelemetryFrame f;
    f.seq = get_int(j, "seq", 0, INT64_MAX);
    f.checkpoint = static_cast<int>(get_int(j, "cp", 0, INT32_MAX));
    f.ts = get_number(j, "ts");
    const json& d = require(j, "data");
    if (!d.is_object()) {
        bad_type("data", "an object");
    }
    f.temp_counts = counts(d, "tc");
    const json& dht = require(d, "dht");
    if (!dht.is_null()) {
        if (!dht.is_array() || dht.size() != 2 || !dht[0].is_number_integer() || !dht[1].is_number_integer()) {
            bad_type("dht", "null or [int,int]");
        }
        f.dht = std::array<int, 2>{dht[0].get<int>(), dht[1].get<int>()};
    }
    f.light_counts = counts(d, "lux");
    const std::string m = get_string(d, "m");
    if (m != "H" && m != "L") {
        bad_type("m", "\"H\" or \"L\"");
    }
    f.moisture_high = m == "H";
    f.ph_counts = counts(d, "ph");
    f.battery_frac = get_number(d, "bat");
    return f;
}

json integral_or_float(double v) {
    if (std::nearbyint(v) == v && std::fabs(v) < 9.0e15) {
        return static_cast<std::int64_t>(v);
    }
    return v;
}

} // namespace

const char* to_string(Level l) {
    return l == Level::warn ? "warn" : "info";
}

const char* kind(const Frame& f) {
    static constexpr const char* names[] = {"auth", "ok", "err", "vw", "tele", "bridge", "notify"};
    return names[f.index()];
}

Frame from_json(const json& j) {
    if (!j.is_object()) {
        throw ProtocolError(code::bad_json, "frame must be a JSON object");
    }
    const std::string t = get_string(j, "t");
    if (t == "auth") {
        Auth a{get_string(j, "node"), get_string(j, "token"), {}};
        if (auto it = j.find("sub"); it != j.end()) {
            a.sub = parse_sub(*it);
        }
        return a;
    }
    if (t == "ok") {
        return Ok{};
    }
    if (t == "err") {
        return Err{get_string(j, "code")};
    }
    if (t == "vw") {
        const int pin = static_cast<int>(get_int(j, "pin", 0, kMaxPin));
        return VirtualWrite{pin, get_number(j, "val")};
    }
    if (t == "tele") {
        return parse_tele(j);
    }
    if (t == "bridge") {
        Bridge b{get_string(j, "dst"), require(j, "payload")};
        if (!b.payload.is_object()) {
            bad_type("payload", "an object");
        }
        return b;
    }
    if (t == "notify") {
        const std::string level = get_string(j, "level");
        if (level != "info" && level != "warn") {
            bad_type("level", "\"info\" or \"warn\"");
        }
        return Notify{level == "warn" ? Level::warn : Level::info, get_string(j, "msg")};
    }
    throw ProtocolError(code::unknown_kind, "unknown frame kind '" + t + "'");
}

Frame parse_frame(std::string_view line) {
    if (!line.empty() && line.back() == '\n') {
        line.remove_suffix(1);
    }
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
        throw ProtocolError(code::bad_json, "line is not valid JSON");
    }
    return from_json(j);
}

ordered_json to_json(const Frame& f) {
    ordered_json j;
    j["t"] = kind(f);
    std::visit(
        [&j](const auto& fr) {
            using T = std::decay_t<decltype(fr)>;
            if constexpr (std::is_same_v<T, Auth>) {
                j["node"] = fr.node;
                j["token"] = fr.token;
                j["sub"] = {{"pins", fr.sub.pins}, {"tele", fr.sub.tele}};
            } else if constexpr (std::is_same_v<T, Err>) {
                j["code"] = fr.code;
            } else if constexpr (std::is_same_v<T, VirtualWrite>) {
                j["pin"] = fr.pin;
                j["val"] = integral_or_float(fr.val);
            } else if constexpr (std::is_same_v<T, TelemetryFrame>) {
                j["seq"] = fr.seq;
                j["cp"] = fr.checkpoint;
                j["ts"] = fr.ts;
                ordered_json d;
                d["tc"] = fr.temp_counts;
                d["dht"] = fr.dht ? ordered_json::array({(*fr.dht)[0], (*fr.dht)[1]}) : ordered_json(nullptr);
                d["lux"] = fr.light_counts;
                d["m"] = fr.moisture_high ? "H" : "L";
                d["ph"] = fr.ph_counts;
                d["bat"] = fr.battery_frac;
                j["data"] = std::move(d);
            } else if constexpr (std::is_same_v<T, Bridge>) {
                j["dst"] = fr.dst;
                j["payload"] = ordered_json::parse(fr.payload.dump());
            } else if constexpr (std::is_same_v<T, Notify>) {
                j["level"] = to_string(fr.level);
                j["msg"] = fr.msg;
            }
        },
        f);
    return j;
}

std::string encode_frame(const Frame& f) {
    std::string out = to_json(f).dump(-1, ' ', false, json::error_handler_t::replace);
    out.push_back('\n');
    return out;
}

} // namespace agri::proto
