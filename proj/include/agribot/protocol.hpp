// SPDX-License-Identifier: Apache-2.0

// Wire protocol shared by the broker and every node: one JSON object per
// line, discriminated by the "t" key. encode_frame() emits a canonical form
// with a fixed key order; parse_frame() accepts any key order.

#ifndef AGRIBOT_PROTOCOL_HPP
#define AGRIBOT_PROTOCOL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace agri::proto {

inline constexpr int kMaxPin = 255;

struct Subscription {
    std::vector<int> pins;
    bool tele = false;
    bool operator==(const Subscription&) const = default;
};

struct Auth {
    std::string node;
    std::string token;
    Subscription sub;
    bool operator==(const Auth&) const = default;
};

struct Ok {
    bool operator==(const Ok&) const = default;
};

struct Err {
    std::string code;
    bool operator==(const Err&) const = default;
};

struct VirtualWrite {
    int pin = 0;
    double val = 0.0;
    bool operator==(const VirtualWrite&) const = default;
};

/// One checkpoint's raw sensor readings as they travel on the wire.
struct TelemetryFrame {
    std::int64_t seq = 0;
    int checkpoint = 0;
    double ts = 0.0;
    int temp_counts = 0;
    std::optional<std::array<int, 2>> dht; // (degC, %RH); nullopt marks a sensor fault
    int light_counts = 0;
    bool moisture_high = false;
    int ph_counts = 0;
    double battery_frac = 1.0;
    bool operator==(const TelemetryFrame&) const = default;
};

struct Bridge {
    std::string dst;
    nlohmann::json payload = nlohmann::json::object();
    bool operator==(const Bridge&) const = default;
};

enum class Level { info, warn };

struct Notify {
    Level level = Level::info;
    std::string msg;
    bool operator==(const Notify&) const = default;
};

using Frame = std::variant<Auth, Ok, Err, VirtualWrite, TelemetryFrame, Bridge, Notify>;

/// Machine-readable parse failure codes.
namespace code {
inline constexpr const char* bad_json = "bad_json";
inline constexpr const char* unknown_kind = "unknown_kind";
inline constexpr const char* missing_field = "missing_field";
inline constexpr const char* bad_type = "bad_type";
} // namespace code

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(std::string code, const std::string& detail)
        : std::runtime_error(detail), code_(std::move(code)) {}
    [[nodiscard]] const std::string& code() const { return code_; }

private:
    std::string code_;
};

/// Parses one line (trailing "\n" or "\r\n" optional). Throws ProtocolError.
[[nodiscard]] Frame parse_frame(std::string_view line);

/// Canonical single-line encoding, newline-terminated.
[[nodiscard]] std::string encode_frame(const Frame& f);

[[nodiscard]] const char* kind(const Frame& f);
[[nodiscard]] const char* to_string(Level l);

/// The frame as a JSON value (same shape and key order as encode_frame).
[[nodiscard]] nlohmann::ordered_json to_json(const Frame& f);
[[nodiscard]] Frame from_json(const nlohmann::json& j);

} // namespace agri::proto

#endif // AGRIBOT_PROTOCOL_HPP
