// SPDX-License-Identifier: Apache-2.0

// Scenario configuration, the bot and controller nodes, and the runner that
// wires them through the broker either in-process or over TCP.

#ifndef AGRIBOT_HARNESS_HPP
#define AGRIBOT_HARNESS_HPP

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agribot/bot.hpp"
#include "agribot/broker.hpp"
#include "agribot/climate.hpp"
#include "agribot/controller.hpp"
#include "agribot/devices.hpp"
#include "agribot/protocol.hpp"

namespace agri::harness {

// Configuration ---------------------------------------------------------------

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, std::string rule)
        : std::runtime_error(path + ": " + rule), path_(std::move(path)), rule_(std::move(rule)) {}
    [[nodiscard]] const std::string& path() const { return path_; }
    [[nodiscard]] const std::string& rule() const { return rule_; }

private:
    std::string path_;
    std::string rule_;
};

struct ZoneOverride {
    bot::GridCoord at;
    climate::ZoneState state;
};

enum class ScriptAction { force_stuck, rescue, set_manual, set_auto };

struct ScriptStep {
    double at_s;
    ScriptAction action;
};

struct BrokerSettings {
    std::string listen = "127.0.0.1:9042";
    std::string ws = "127.0.0.1:9043";
    std::string token = "greenhouse";
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    double dt = 1.0;
    double duration_s = 86400.0;
    std::size_t rows = 4;
    std::size_t cols = 4;
    climate::ZoneState initial;
    std::vector<ZoneOverride> overrides;
    climate::ModelParams model;
    climate::AmbientProfile ambient;
    bot::PathPlan path;
    bot::MudModel mud;
    bot::StuckEmits stuck_emits = bot::StuckEmits::repeat;
    double report_period_s = 0.0; // stuck re-report interval; 0 means one leg time
    bot::SensorConfig sensors;
    double relay_settle_s = 0.01;
    bot::MotorCurrents motors;
    devices::Battery battery;
    control::ThresholdConfig control;
    BrokerSettings broker;
    std::vector<ScriptStep> script;

    [[nodiscard]] std::int64_t ticks() const;
    [[nodiscard]] double stuck_report_period() const;
    /// Zone index (row-major) of every checkpoint.
    [[nodiscard]] std::vector<std::size_t> checkpoint_zones() const;
};

/// Parses and validates a JSON scenario. Omitted fields take defaults.
[[nodiscard]] ScenarioConfig load_config(const std::string& text);
[[nodiscard]] ScenarioConfig load_config_file(const std::string& path);

/// Checks every cross-module precondition; throws ConfigError naming the rule.
void validate(const ScenarioConfig& cfg);

/// The defaults as a JSON document (what load_config("{}") produces).
[[nodiscard]] nlohmann::ordered_json to_json(const ScenarioConfig& cfg);

// Run log -----------------------------------------------------------------------

enum class Source : int { bot = 0, controller = 1 };

struct LogRecord {
    std::int64_t tick = 0;
    Source source = Source::bot;
    double rx_ts = 0.0;
    std::string kind; // tele | cmd | notify | event
    nlohmann::ordered_json body;
    bool operator==(const LogRecord&) const = default;
};

/// Ordered by (tick, source, arrival).
struct RunLog {
    std::vector<LogRecord> records;
    bool operator==(const RunLog&) const = default;
};

enum class LogFormat { jsonl, csv };

/// jsonl: {"tick","src","rx_ts","kind","body"} per line. csv: one row per telemetry record.
[[nodiscard]] std::string export_log(const RunLog& log, LogFormat format);
[[nodiscard]] RunLog parse_jsonl_log(const std::string& text);
/// jsonl without rx_ts, for comparing runs whose wall-clock stamps differ.
[[nodiscard]] std::string canonical_log(const RunLog& log);

inline constexpr const char* kCsvHeader = "tick,seq,cp,ts,tc,dht_t,dht_rh,lux,m,ph,bat";

// Nodes -------------------------------------------------------------------------

inline constexpr const char* kBotNode = "bot";
inline constexpr const char* kControllerNode = "ctl";

/// A node's connection to the broker: frames out, encoded lines in.
class Link {
public:
    virtual ~Link() = default;
    virtual void send(const proto::Frame& f) = 0;
    virtual std::optional<std::string> receive(std::chrono::milliseconds timeout) = 0;
};

/// In-process link: a session on a Broker whose sink feeds a local queue.
/// Single-threaded use only.
class LoopbackLink final : public Link {
public:
    explicit LoopbackLink(broker::Broker& b);
    ~LoopbackLink() override;
    LoopbackLink(const LoopbackLink&) = delete;
    LoopbackLink& operator=(const LoopbackLink&) = delete;

    void send(const proto::Frame& f) override;
    std::optional<std::string> receive(std::chrono::milliseconds timeout) override;

private:
    broker::Broker& broker_;
    std::shared_ptr<std::deque<std::string>> inbox_;
    broker::SessionId id_;
};

namespace detail {
class TcpClientHolder;
}

/// Link over a TCP connection to a broker.
class TcpLink final : public Link {
public:
    TcpLink(const std::string& host, std::uint16_t port);
    ~TcpLink() override;
    TcpLink(const TcpLink&) = delete;
    TcpLink& operator=(const TcpLink&) = delete;

    void send(const proto::Frame& f) override;
    std::optional<std::string> receive(std::chrono::milliseconds timeout) override;
    [[nodiscard]] bool connected() const;
    void close();

private:
    std::unique_ptr<detail::TcpClientHolder> client_;
};

/// Auth frames for the two simulation nodes.
[[nodiscard]] proto::Auth bot_auth(const std::string& token);
[[nodiscard]] proto::Auth controller_auth(const std::string& token);

/// Sends auth and waits for the reply. Throws std::runtime_error unless it is ok.
void handshake(Link& link, const proto::Auth& auth,
               std::chrono::milliseconds timeout = std::chrono::seconds(5));

/// Snapshot handed to run observers after every tick.
struct TickView {
    std::int64_t tick;
    double t; // end of tick
    const climate::Greenhouse& greenhouse;
    const climate::ActuatorBank& actuators;
    const bot::BotState& bot;
};

using Observer = std::function<void(const TickView&)>;

/// The bot process: owns the simulated greenhouse, its relays and the robot.
class BotNode {
public:
    BotNode(const ScenarioConfig& cfg, Link& link);

    /// Runs tick k and sends its telemetry and the end-of-tick barrier.
    void tick(std::int64_t k);

    /// Consumes inbound lines until the controller acknowledges tick k.
    /// Returns false if no controller is attached (barrier had no route).
    bool await_ack(std::int64_t k, std::chrono::milliseconds timeout);

    /// Tells the controller the run is over.
    void finish();

    void set_observer(Observer obs) { observer_ = std::move(obs); }

    [[nodiscard]] const climate::Greenhouse& greenhouse() const { return world_; }
    [[nodiscard]] const climate::ActuatorBank& actuators() const { return actuators_; }
    [[nodiscard]] const bot::BotState& state() const { return bot_; }
    [[nodiscard]] std::vector<LogRecord>& records() { return records_; }
    /// False once the bot runs without a controller attached.
    [[nodiscard]] bool lockstep() const { return lockstep_; }

    /// Records the run header.
    void start();

private:
    void handle(const std::string& line);
    void apply_script(std::int64_t k);
    void log_event(const std::string& name, nlohmann::ordered_json extra = nlohmann::ordered_json::object());
    void emit(const proto::TelemetryFrame& f);

    const ScenarioConfig& cfg_;
    Link& link_;
    climate::Greenhouse world_;
    devices::RelayBank relays_;
    climate::ActuatorBank actuators_;
    bot::BotState bot_;
    bot::Rng stuck_rng_;
    std::vector<std::size_t> cp_zone_;
    std::optional<proto::TelemetryFrame> last_frame_;
    double last_emit_t_ = 0.0;
    std::int64_t tick_ = 0;
    std::int64_t acked_ = -1;
    bool lockstep_ = true;
    std::vector<std::string> pending_;
    std::vector<LogRecord> records_;
    Observer observer_;
};

/// The control-end process. Time comes from the bot's end-of-tick barriers;
/// `clock` supplies receive timestamps for the log.
class ControllerNode {
public:
    ControllerNode(const ScenarioConfig& cfg, Link& link, std::function<double()> clock = {},
                   control::LogSink* sink = nullptr);

    /// Handles one inbound line. Returns false once the bot has finished.
    bool handle(const std::string& line);

    /// Handles everything currently queued without blocking.
    void drain();

    /// Blocking loop until finished or the link goes quiet for `idle`.
    void run(std::chrono::milliseconds idle);

    [[nodiscard]] const control::ControlState& state() const { return state_; }
    [[nodiscard]] const control::WatchdogState& watchdog() const { return watchdog_; }
    [[nodiscard]] std::vector<LogRecord>& records() { return records_; }
    [[nodiscard]] bool finished() const { return finished_; }

private:
    void on_tele(const proto::TelemetryFrame& f);
    void on_barrier(std::int64_t tick, double ts);
    void apply(const control::Decision& d);
    void notify(const control::Notification& n);
    void record(const std::string& kind, nlohmann::ordered_json body);
    double rx_now() const;

    const ScenarioConfig& cfg_;
    Link& link_;
    std::function<double()> clock_;
    control::LogSink* sink_;
    bool sink_failed_ = false;
    control::ControlState state_;
    control::WatchdogState watchdog_;
    std::vector<std::size_t> cp_zone_;
    std::vector<std::size_t> armed_this_tick_;
    std::int64_t tick_ = 0;
    double now_ = 0.0;
    bool finished_ = false;
    std::vector<LogRecord> records_;
};

// Runner ------------------------------------------------------------------------

enum class RunMode { inproc, networked };

struct RunError : std::runtime_error {
    RunError(std::int64_t tick, std::string module, const std::string& what)
        : std::runtime_error("tick " + std::to_string(tick) + " [" + module + "]: " + what),
          tick(tick), module(std::move(module)) {}
    std::int64_t tick;
    std::string module;
};

/// Runs duration_s/dt ticks. Both modes exchange identical frame bytes and
/// produce the same log apart from receive timestamps.
[[nodiscard]] RunLog run_scenario(const ScenarioConfig& cfg, RunMode mode, const Observer& observer = {});

/// Re-runs the controller rules over the telemetry in a log and returns the
/// resulting cmd/notify records.
[[nodiscard]] std::vector<LogRecord> replay_controller(const RunLog& log, const ScenarioConfig& cfg);

} // namespace agri::harness

#endif // AGRIBOT_HARNESS_HPP
