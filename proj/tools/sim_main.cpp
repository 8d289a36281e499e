// SPDX-License-Identifier: Apache-2.0

// sim run | validate | serve-console | bot

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "agribot/harness.hpp"
#include "agribot/transport.hpp"

namespace h = agri::harness;
using namespace std::chrono_literals;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int cmd_validate(const std::string& path, bool print) {
    try {
        const h::ScenarioConfig cfg = h::load_config_file(path);
        if (print) {
            std::cout << h::to_json(cfg).dump(2) << '\n';
        } else {
            std::cout << path << ": ok\n";
        }
        return kOk;
    } catch (const h::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
}

int cmd_run(const std::string& path, const std::string& mode, const std::string& out, const std::string& format) {
    h::ScenarioConfig cfg;
    try {
        cfg = h::load_config_file(path);
    } catch (const h::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    try {
        const h::RunLog log = h::run_scenario(cfg, mode == "net" ? h::RunMode::networked : h::RunMode::inproc);
        const std::string bytes = h::export_log(log, format == "csv" ? h::LogFormat::csv : h::LogFormat::jsonl);
        if (out == "-") {
            std::cout << bytes;
        } else {
            std::ofstream f(out, std::ios::binary | std::ios::trunc);
            f << bytes;
            if (!f) {
                std::cerr << "cannot write " << out << '\n';
                return kRuntimeError;
            }
        }
        std::cerr << log.records.size() << " records, " << cfg.ticks() << " ticks\n";
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return kRuntimeError;
    }
}

constexpr const char* kPlaceholderPage =
    "<!doctype html><title>Agri-Bot console</title>"
    "<p>Console bundle not found. Build it into the directory given by <code>--root</code>.</p>"
    "<p>The broker WebSocket endpoint is <code>ws://&lt;broker-ws-addr&gt;/ws</code>.</p>";

int cmd_serve_console(const std::string& addr, std::string root) {
    agri::net::Endpoint ep;
    try {
        ep = agri::net::parse_endpoint(addr);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    httplib::Server server;
    if (!root.empty() && std::filesystem::is_directory(root)) {
        if (!server.set_mount_point("/", root)) {
            std::cerr << "cannot serve " << root << '\n';
            return kConfigError;
        }
    } else {
        server.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(kPlaceholderPage, "text/html");
        });
    }
    std::cerr << "serving console on http://" << agri::net::to_string(ep) << "/\n";
    if (!server.listen(ep.host, ep.port)) {
        std::cerr << "cannot listen on " << addr << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int cmd_bot(const std::string& path, const std::string& broker_addr, bool realtime) {
    h::ScenarioConfig cfg;
    agri::net::Endpoint ep;
    try {
        cfg = h::load_config_file(path);
        ep = agri::net::parse_endpoint(broker_addr.empty() ? cfg.broker.listen : broker_addr);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    try {
        h::TcpLink link(ep.host, ep.port);
        h::handshake(link, h::bot_auth(cfg.broker.token));
        h::BotNode bot(cfg, link);
        bot.start();
        const auto tick_wall = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(cfg.dt));
        auto next = std::chrono::steady_clock::now();
        for (std::int64_t k = 0; k < cfg.ticks(); ++k) {
            bot.tick(k);
            if (!bot.await_ack(k, 10s) && k == 0) {
                std::cerr << "no controller attached; running free\n";
            }
            if (realtime) {
                next += tick_wall;
                std::this_thread::sleep_until(next);
            }
        }
        bot.finish();
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "bot failed: " << e.what() << '\n';
        return kRuntimeError;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Greenhouse simulation harness"};
    app.require_subcommand(1);

    std::string config;
    std::string mode = "inproc";
    std::string out = "-";
    std::string format = "jsonl";
    auto* run = app.add_subcommand("run", "run a scenario and export its log");
    run->add_option("--config", config, "scenario JSON")->required();
    run->add_option("--mode", mode, "inproc or net")->check(CLI::IsMember({"inproc", "net"}))->capture_default_str();
    run->add_option("--out", out, "output path, - for stdout")->capture_default_str();
    run->add_option("--format", format, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}))->capture_default_str();

    bool print = false;
    auto* validate = app.add_subcommand("validate", "check a scenario config");
    validate->add_option("--config", config, "scenario JSON")->required();
    validate->add_flag("--print", print, "print the effective config with defaults filled in");

    std::string addr = "127.0.0.1:8080";
    std::string root = AGRIBOT_CONSOLE_DIR;
    auto* serve = app.add_subcommand("serve-console", "serve the operator console bundle over HTTP");
    serve->add_option("--addr", addr, "HTTP listen address")->capture_default_str();
    serve->add_option("--root", root, "directory holding the built console")->capture_default_str();

    std::string broker_addr;
    bool realtime = false;
    auto* bot = app.add_subcommand("bot", "run the greenhouse and robot against an external broker");
    bot->add_option("--config", config, "scenario JSON")->required();
    bot->add_option("--broker", broker_addr, "broker TCP address (default: broker.listen from the config)");
    bot->add_flag("--realtime", realtime, "pace ticks at wall-clock dt");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    if (*run) {
        return cmd_run(config, mode, out, format);
    }
    if (*validate) {
        return cmd_validate(config, print);
    }
    if (*serve) {
        return cmd_serve_console(addr, root);
    }
    return cmd_bot(config, broker_addr, realtime);
}
