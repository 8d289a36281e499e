// SPDX-License-Identifier: Apache-2.0

// controller --broker <addr> --token <t> --config <file> --log <path.jsonl>

#include <iostream>

#include <CLI11.hpp>

#include "agribot/harness.hpp"
#include "agribot/transport.hpp"

using namespace std::chrono_literals;

int main(int argc, char** argv) {
    CLI::App app{"Greenhouse control end: rules, watchdog and JSONL persistence"};
    std::string broker_addr = "127.0.0.1:9042";
    std::string token;
    std::string config_path;
    std::string log_path;
    app.add_option("--broker", broker_addr, "broker TCP address host:port")->capture_default_str();
    app.add_option("--token", token, "project token")->required();
    app.add_option("--config", config_path, "scenario config (thresholds, grid, path)")->required();
    app.add_option("--log", log_path, "append-only JSONL log")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    agri::harness::ScenarioConfig cfg;
    agri::net::Endpoint ep;
    try {
        cfg = agri::harness::load_config_file(config_path);
        cfg.broker.token = token;
        ep = agri::net::parse_endpoint(broker_addr);
    } catch (const std::exception& e) {
        std::cerr << "controller: " << e.what() << '\n';
        return 1;
    }

    try {
        agri::control::JsonlFileSink sink(log_path);
        agri::harness::TcpLink link(ep.host, ep.port);
        agri::harness::handshake(link, agri::harness::controller_auth(token));

        const auto t0 = std::chrono::steady_clock::now();
        auto clock = [t0] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
        agri::harness::ControllerNode node(cfg, link, clock, &sink);
        std::cerr << "controller: connected to " << broker_addr << " as " << agri::harness::kControllerNode << '\n';
        while (!node.finished()) {
            node.run(1s);
            node.records().clear(); // the sink is the durable copy
            if (!node.finished() && !link.connected()) {
                std::cerr << "controller: broker closed the connection\n";
                return 2;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "controller: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
