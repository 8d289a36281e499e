// SPDX-License-Identifier: Apache-2.0

// broker --listen <addr> --ws <addr> --tokens <file>

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "agribot/broker.hpp"
#include "agribot/transport.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Token-scoped frame relay (TCP lines and WebSocket /ws)"};
    std::string listen = "127.0.0.1:9042";
    std::string ws;
    std::string tokens_path;
    unsigned threads = 2;
    app.add_option("--listen", listen, "TCP listen address host:port")->capture_default_str();
    app.add_option("--ws", ws, "WebSocket listen address host:port (path /ws)");
    app.add_option("--tokens", tokens_path, "token file, one per line")->required();
    app.add_option("--threads", threads, "I/O threads")->capture_default_str()->check(CLI::Range(1u, 64u));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    agri::net::Endpoint tcp_ep;
    std::optional<agri::net::Endpoint> ws_ep;
    std::set<std::string> tokens;
    try {
        tcp_ep = agri::net::parse_endpoint(listen);
        if (!ws.empty()) {
            ws_ep = agri::net::parse_endpoint(ws);
        }
        tokens = agri::broker::load_tokens(tokens_path);
        if (tokens.empty()) {
            throw std::runtime_error(tokens_path + ": no tokens");
        }
    } catch (const std::exception& e) {
        std::cerr << "broker: " << e.what() << '\n';
        return 1;
    }

    // Block termination signals before the I/O threads start so only sigwait sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    try {
        agri::broker::Broker broker(tokens);
        agri::net::BrokerServer server(broker, tcp_ep, ws_ep, threads);
        std::cerr << "broker: tcp " << tcp_ep.host << ':' << server.tcp_port();
        if (ws_ep) {
            std::cerr << ", ws " << ws_ep->host << ':' << server.ws_port() << "/ws";
        }
        std::cerr << ", " << tokens.size() << " token(s)\n";
        int sig = 0;
        sigwait(&stop_signals, &sig);
        server.stop();
    } catch (const std::exception& e) {
        std::cerr << "broker: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
