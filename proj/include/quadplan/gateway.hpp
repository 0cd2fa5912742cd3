#pragma once

// HTTP/1.1 + SSE face of the system. All routes live under /v1 and every
// error body is {"error_kind": ..., "detail": ...}. See docs/http_api.md.

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "quadplan/grounding.hpp"
#include "quadplan/mission.hpp"
#include "quadplan/provider.hpp"
#include "quadplan/world.hpp"

namespace httplib {
class Server;
}

namespace quadplan {

inline constexpr std::string_view kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks an ephemeral port

    bool mock = true;
    std::optional<ProviderConfig> provider;        // required when mock is false
    std::optional<std::filesystem::path> keywords; // mock keyword table; built-in when unset

    std::filesystem::path map_path;
    std::optional<std::filesystem::path> template_path;  // built-in template when unset

    SimConfig sim;
    double pace = 1.0;  // sim seconds per wall second, 0 = flat out
    std::uint64_t seed = 1;
    RecoveryPolicy policy = RecoveryPolicy::abort_mission;
    std::vector<FaultSpec> faults;

    std::optional<std::filesystem::path> outcome_log;
    std::optional<std::filesystem::path> mission_log;

    double heartbeat_s = 10.0;
    bool reprompt_on_invalid = false;
    int threads = 32;

    /// Relative paths resolve against `base_dir`. Throws ConfigError.
    static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ServiceConfig load(const std::filesystem::path& path);

    /// Referenced files exist, port in range, numbers positive. Throws ConfigError.
    void validate() const;
};

struct GatewayOptions {
    double heartbeat_s = 10.0;
    /// /metrics reads this log when set, otherwise the executor's in-memory records.
    std::optional<std::filesystem::path> metrics_log;
    int threads = 32;
};

class Gateway {
public:
    Gateway(std::shared_ptr<const WaypointWorld> world, std::shared_ptr<const Grounder> grounder,
            ExecutorConfig executor_config, GatewayOptions options = {});
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Binds and serves on a background thread. Returns the bound port.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

    MissionExecutor& executor() { return executor_; }

private:
    void install_routes();
    void join_groundings();

    std::shared_ptr<const WaypointWorld> world_;
    std::shared_ptr<const Grounder> grounder_;
    MissionExecutor executor_;
    GatewayOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread listener_;
    std::atomic<bool> stopping_{false};

    struct Abandoned {
        std::shared_ptr<std::atomic<bool>> done;
        std::jthread thread;
    };
    std::mutex groundings_mutex_;
    std::vector<Abandoned> abandoned_;  // groundings past their deadline, joined on stop
};

/// Loads map, template, provider and logs as the config says.
std::unique_ptr<Gateway> make_gateway(const ServiceConfig& config);

}  // namespace quadplan
