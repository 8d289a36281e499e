// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "agribot/broker.hpp"

using namespace agri::broker;
using namespace agri::proto;
namespace bcode = agri::broker::code;
namespace pcode = agri::proto::code;

namespace {

ProjectRegistry registry() {
    ProjectRegistry reg;
    reg.tokens = {"alpha", "beta"};
    return reg;
}

NodeSession join(ProjectRegistry& reg, SessionId id, const std::string& node, const std::string& token,
                 Subscription sub = {}) {
    auto r = authenticate(NodeSession{id}, Auth{node, token, std::move(sub)}, reg);
    REQUIRE(std::holds_alternative<Ok>(r.reply));
    return r.session;
}

std::vector<SessionId> targets(const std::vector<Delivery>& ds) {
    std::vector<SessionId> out;
    for (const auto& d : ds) {
        out.push_back(d.to);
    }
    return out;
}

// Collects the lines a Broker pushes to one session.
struct Inbox {
    std::mutex mu;
    std::vector<std::string> lines;
    Broker::Sink sink() {
        return [this](std::string l) {
            std::lock_guard lock(mu);
            lines.push_back(std::move(l));
        };
    }
    std::vector<std::string> take() {
        std::lock_guard lock(mu);
        return std::exchange(lines, {});
    }
};

} // namespace

TEST_CASE("authenticate") {
    auto reg = registry();
    auto r = authenticate(NodeSession{1}, Auth{"bot", "alpha", {}}, reg);
    CHECK(r.reply == Frame{Ok{}});
    CHECK(r.session.authed);

    CHECK(authenticate(NodeSession{2}, Auth{"app", "nope", {}}, reg).reply == Frame{Err{bcode::auth_failed}});

    auto dup = authenticate(NodeSession{3}, Auth{"bot", "alpha", {}}, reg);
    CHECK(dup.reply == Frame{Err{bcode::duplicate_node}});
    CHECK_FALSE(dup.session.authed);

    // Same node id under another token is a different project.
    CHECK(authenticate(NodeSession{4}, Auth{"bot", "beta", {}}, reg).reply == Frame{Ok{}});
    CHECK(authenticate(r.session, Auth{"x", "alpha", {}}, reg).reply == Frame{Err{bcode::already_authed}});
}

TEST_CASE("route") {
    auto reg = registry();
    const auto bot = join(reg, 1, "bot", "alpha", {{0, 1, 2, 3}, false});
    const auto app = join(reg, 2, "app", "alpha", {{}, true});
    const auto ctl = join(reg, 3, "ctl", "alpha", {{}, true});
    const auto other = join(reg, 4, "bot2", "beta", {{0, 1, 2, 3}, true});

    CHECK(targets(route(VirtualWrite{2, 1}, app, reg)) == std::vector<SessionId>{1});
    CHECK(route(VirtualWrite{9, 1}, app, reg).empty());
    CHECK(route(VirtualWrite{2, 1}, bot, reg).empty()); // no echo to the sender

    CHECK(targets(route(Bridge{"bot", {{"cmd", "relay"}}}, ctl, reg)) == std::vector<SessionId>{1});
    auto nr = route(Bridge{"ghost", {}}, ctl, reg);
    REQUIRE(nr.size() == 1);
    CHECK(nr[0].to == 3);
    CHECK(nr[0].frame == Frame{Err{bcode::no_route}});
    // Bridges do not cross tokens.
    CHECK(route(Bridge{"bot2", {}}, ctl, reg)[0].frame == Frame{Err{bcode::no_route}});

    CHECK(targets(route(TelemetryFrame{}, bot, reg)) == std::vector<SessionId>{2, 3});
    CHECK(route(TelemetryFrame{}, other, reg).empty());
    CHECK(targets(route(Notify{Level::warn, "bot stuck"}, ctl, reg)) == std::vector<SessionId>{1, 2});

    NodeSession stranger{9};
    CHECK(route(VirtualWrite{2, 1}, stranger, reg)[0].frame == Frame{Err{bcode::not_authed}});
}

TEST_CASE("Broker drives sessions through sinks") {
    Broker b({"alpha"});
    Inbox bot_in;
    Inbox app_in;
    const auto bot = b.connect(bot_in.sink());
    const auto app = b.connect(app_in.sink());
    CHECK(b.session_count() == 2);

    b.receive(app, encode_frame(VirtualWrite{2, 1}));
    CHECK(app_in.take() == std::vector<std::string>{encode_frame(Err{bcode::not_authed})});

    b.receive(bot, encode_frame(Auth{"bot", "alpha", {{0, 1, 2, 3}, false}}));
    b.receive(app, encode_frame(Auth{"app", "alpha", {{}, true}}));
    CHECK(bot_in.take() == std::vector<std::string>{encode_frame(Ok{})});
    CHECK(app_in.take() == std::vector<std::string>{encode_frame(Ok{})});

    b.receive(app, "{\"t\":\"vw\",\"pin\":2,\"val\":1}\n");
    CHECK(bot_in.take() == std::vector<std::string>{encode_frame(VirtualWrite{2, 1})});

    b.receive(app, "garbage");
    CHECK(app_in.take() == std::vector<std::string>{encode_frame(Err{pcode::bad_json})});
    b.receive(app, R"({"t":"nope"})");
    CHECK(app_in.take() == std::vector<std::string>{encode_frame(Err{pcode::unknown_kind})});

    b.disconnect(bot);
    CHECK(b.session_count() == 1);
    b.receive(app, encode_frame(Bridge{"bot", nlohmann::json::object()}));
    CHECK(app_in.take() == std::vector<std::string>{encode_frame(Err{bcode::no_route})});

    // The node id is free again once its session is gone.
    Inbox again;
    const auto bot2 = b.connect(again.sink());
    b.receive(bot2, encode_frame(Auth{"bot", "alpha", {}}));
    CHECK(again.take() == std::vector<std::string>{encode_frame(Ok{})});
}

TEST_CASE("Broker keeps per-sender FIFO under concurrency") {
    Broker b({"alpha"});
    Inbox sink_in;
    const auto sink = b.connect(sink_in.sink());
    b.receive(sink, encode_frame(Auth{"app", "alpha", {{}, true}}));
    (void)sink_in.take();

    constexpr int kSenders = 8;
    constexpr int kFrames = 500;
    std::vector<SessionId> ids;
    std::vector<Inbox> dummy(kSenders);
    for (int s = 0; s < kSenders; ++s) {
        ids.push_back(b.connect(dummy[static_cast<std::size_t>(s)].sink()));
        b.receive(ids.back(), encode_frame(Auth{"bot" + std::to_string(s), "alpha", {}}));
    }
    std::vector<std::thread> threads;
    for (int s = 0; s < kSenders; ++s) {
        threads.emplace_back([&, s] {
            for (int i = 0; i < kFrames; ++i) {
                TelemetryFrame f;
                f.checkpoint = s;
                f.seq = i;
                b.receive(ids[static_cast<std::size_t>(s)], encode_frame(f));
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    std::vector<std::int64_t> next(kSenders, 0);
    const auto lines = sink_in.take();
    CHECK(lines.size() == static_cast<std::size_t>(kSenders * kFrames));
    for (const auto& l : lines) {
        const auto f = std::get<TelemetryFrame>(parse_frame(l));
        CHECK(f.seq == next[static_cast<std::size_t>(f.checkpoint)]++);
    }
}

TEST_CASE("load_tokens") {
    const auto path = std::filesystem::temp_directory_path() / "agribot_tokens.txt";
    {
        std::ofstream f(path);
        f << "# project tokens\n\nalpha\n  beta  \r\n#gamma\n";
    }
    CHECK(load_tokens(path.string()) == std::set<std::string>{"alpha", "beta"});
    std::filesystem::remove(path);
    CHECK_THROWS((void)load_tokens("/nonexistent/tokens.txt"));
}
