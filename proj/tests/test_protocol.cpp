// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "agribot/protocol.hpp"

using namespace agri::proto;

namespace {

std::string parse_code(std::string_view line) {
    try {
        (void)parse_frame(line);
    } catch (const ProtocolError& e) {
        return e.code();
    }
    return "";
}

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}
    int num(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    std::string text() {
        std::string s;
        for (int n = num(0, 12); n > 0; --n) {
            // Include quotes, backslashes, controls and multibyte UTF-8.
            static const char* pieces[] = {"a", "Z", " ", "\"", "\\", "\n", "\t", "\x01", "\xc3\xa9", "{", "}", "9"};
            s += pieces[num(0, 11)];
        }
        return s;
    }

    Frame frame() {
        switch (num(0, 6)) {
        case 0: {
            Auth a{text(), text(), {}};
            for (int n = num(0, 4); n > 0; --n) {
                a.sub.pins.push_back(num(0, kMaxPin));
            }
            a.sub.tele = num(0, 1) == 1;
            return a;
        }
        case 1: return Ok{};
        case 2: return Err{text()};
        case 3: return VirtualWrite{num(0, kMaxPin), static_cast<double>(num(-5, 5))};
        case 4: {
            TelemetryFrame f;
            f.seq = num(0, 1 << 30);
            f.checkpoint = num(0, 50);
            f.ts = num(0, 100000) * 0.25;
            f.temp_counts = num(0, 1023);
            if (num(0, 3) > 0) {
                f.dht = std::array<int, 2>{num(0, 50), num(20, 90)};
            }
            f.light_counts = num(0, 1023);
            f.moisture_high = num(0, 1) == 1;
            f.ph_counts = num(0, 1023);
            f.battery_frac = num(0, 1000) / 1000.0;
            return f;
        }
        case 5: return Bridge{text(), nlohmann::json{{"cmd", "relay"}, {"ch", num(0, 40)}, {"note", text()}}};
        default: return Notify{num(0, 1) ? Level::warn : Level::info, text()};
        }
    }
};

} // namespace

TEST_CASE("parse_frame examples") {
    const Frame f = parse_frame(R"({"t":"vw","pin":2,"val":1})");
    REQUIRE(std::holds_alternative<VirtualWrite>(f));
    CHECK(std::get<VirtualWrite>(f).pin == 2);
    CHECK(std::get<VirtualWrite>(f).val == 1.0);

    CHECK(parse_code(R"({"t":"nope"})") == code::unknown_kind);
    CHECK(parse_code(R"({"t":"vw","pin":2})") == code::missing_field);
    CHECK(parse_code("{not json") == code::bad_json);
    CHECK(parse_code("[1,2]") == code::bad_json);
    CHECK(parse_code(R"({"t":"vw","pin":"2","val":1})") == code::bad_type);
    CHECK(parse_code(R"({"t":"vw","pin":256,"val":1})") == code::bad_type);
}

TEST_CASE("parse_frame accepts any key order and line endings") {
    CHECK(parse_frame("{\"val\":0,\"pin\":3,\"t\":\"vw\"}\r\n") == Frame{VirtualWrite{3, 0.0}});
    const Frame tele = parse_frame(
        R"({"data":{"bat":0.5,"ph":512,"m":"L","lux":0,"dht":null,"tc":51},"ts":3.5,"cp":4,"seq":9,"t":"tele"})");
    REQUIRE(std::holds_alternative<TelemetryFrame>(tele));
    const auto& f = std::get<TelemetryFrame>(tele);
    CHECK(f.seq == 9);
    CHECK(f.checkpoint == 4);
    CHECK_FALSE(f.dht);
    CHECK_FALSE(f.moisture_high);
    CHECK(f.ph_counts == 512);
}

TEST_CASE("canonical encodings") {
    CHECK(encode_frame(Ok{}) == "{\"t\":\"ok\"}\n");
    CHECK(encode_frame(Err{"no_route"}) == "{\"t\":\"err\",\"code\":\"no_route\"}\n");

    const std::string line = encode_frame(Notify{Level::warn, "bot \"stuck\"\n"});
    CHECK(line.find('\n') == line.size() - 1);
    CHECK(line.find(R"(bot \"stuck\"\n)") != std::string::npos);
    CHECK(std::get<Notify>(parse_frame(line)).msg == "bot \"stuck\"\n");

    TelemetryFrame f;
    f.seq = 1;
    f.checkpoint = 2;
    f.ts = 3.0;
    f.temp_counts = 51;
    f.dht = std::array<int, 2>{25, 60};
    f.light_counts = 512;
    f.moisture_high = true;
    f.ph_counts = 512;
    f.battery_frac = 1.0;
    const auto j = nlohmann::json::parse(encode_frame(f));
    CHECK(j["data"]["m"] == "H");
    CHECK(j["data"]["dht"] == nlohmann::json::array({25, 60}));
    CHECK(std::string(kind(f)) == "tele");
}

TEST_CASE("property: encode then parse is the identity for every kind") {
    Gen gen(11);
    int seen[7] = {};
    for (int i = 0; i < 20000; ++i) {
        const Frame f = gen.frame();
        ++seen[f.index()];
        const std::string line = encode_frame(f);
        REQUIRE(line.back() == '\n');
        CHECK(line.find('\n') == line.size() - 1);
        CHECK(parse_frame(line) == f);
        CHECK(from_json(nlohmann::json::parse(to_json(f).dump())) == f);
    }
    for (int k : seen) {
        CHECK(k > 0);
    }
}

TEST_CASE("property: arbitrary bytes parse or fail with a code") {
    Gen gen(12);
    std::vector<std::string> seeds;
    for (int i = 0; i < 50; ++i) {
        seeds.push_back(encode_frame(gen.frame()));
    }
    for (int i = 0; i < 20000; ++i) {
        std::string s = seeds[static_cast<std::size_t>(gen.num(0, 49))];
        // Mutate a valid line so many inputs get deep into the parser.
        for (int n = gen.num(1, 6); n > 0; --n) {
            const auto pos = static_cast<std::size_t>(gen.num(0, static_cast<int>(s.size()) - 1));
            switch (gen.num(0, 2)) {
            case 0: s[pos] = static_cast<char>(gen.num(0, 255)); break;
            case 1: s.erase(pos, 1); break;
            default: s.insert(pos, 1, static_cast<char>(gen.num(0, 255))); break;
            }
            if (s.empty()) {
                s = "x";
            }
        }
        try {
            const Frame f = parse_frame(s);
            // Anything accepted must survive its own round trip.
            CHECK(parse_frame(encode_frame(f)) == f);
        } catch (const ProtocolError& e) {
            const std::string c = e.code();
            CHECK((c == code::bad_json || c == code::unknown_kind || c == code::missing_field || c == code::bad_type));
        }
    }
}
