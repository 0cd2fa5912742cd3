#pragma once

// Mission state machine. A mission runs one validated plan on a NavSimulator,
// action by action:
//
//   pending -> executing(0) -> executing(1) -> ... -> completed | failed | aborted
//
// run_mission is the synchronous core; MissionExecutor wraps it in a
// long-lived worker with a run/abort command queue and live event feeds.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "quadplan/nav_sim.hpp"
#include "quadplan/plan.hpp"

namespace quadplan {

enum class Phase { pending, executing, completed, failed, aborted };
enum class RecoveryPolicy { abort_mission, skip_action, retry_once_then_abort };
enum class ScenarioTag { single_room_short, multi_room_short, multi_room_long, cross_zone, untagged };

std::string_view to_string(Phase phase);
std::string_view to_string(RecoveryPolicy policy);
std::string_view to_string(ScenarioTag tag);
std::optional<RecoveryPolicy> recovery_policy_from_string(std::string_view text);
std::optional<ScenarioTag> scenario_tag_from_string(std::string_view text);
/// Row label used in the summary table ("Short Dist. (Single-Room)", ...).
std::string_view display_name(ScenarioTag tag);

inline bool is_terminal(Phase p) {
    return p == Phase::completed || p == Phase::failed || p == Phase::aborted;
}

class SimBusyError : public std::runtime_error {
public:
    SimBusyError() : std::runtime_error("simulator busy: a mission is already executing") {}
};

/// Throws std::logic_error on any transition outside the whitelist.
class StatusMachine {
public:
    struct Step {
        Phase phase;
        std::optional<std::size_t> action_index;
        bool operator==(const Step&) const = default;
    };

    Phase phase() const { return current_.phase; }
    std::optional<std::size_t> action_index() const { return current_.action_index; }
    const std::vector<Step>& history() const { return history_; }

    void execute(std::size_t index);
    void finish(Phase terminal);

    static bool legal(const Step& from, const Step& to);

private:
    Step current_{Phase::pending, std::nullopt};
    std::vector<Step> history_{Step{Phase::pending, std::nullopt}};
};

struct MissionStatus {
    std::string mission_id;
    Phase phase = Phase::pending;
    std::optional<std::size_t> action_index;
    double started_at = 0.0;
    double finished_at = 0.0;
    Point current_pose;
    std::string failure_detail;
};

nlohmann::ordered_json to_json(const MissionStatus& status);

struct MissionRecord {
    std::string mission_id;
    std::string outcome_id;
    std::string plan_id;
    ScenarioTag scenario_tag = ScenarioTag::untagged;
    Phase final_phase = Phase::pending;
    bool success = false;
    double started_at = 0.0;
    double finished_at = 0.0;
    double duration_s = 0.0;          // motion only: finished_at - started_at
    double end_to_end_s = 0.0;        // grounding latency + motion
    std::size_t skipped_actions = 0;  // skip_action policy only
    std::string failure_detail;
    std::vector<SimEvent> events;
    std::vector<StatusMachine::Step> transitions;
};

/// One log line. Events are left out unless `with_events`.
nlohmann::ordered_json to_json(const MissionRecord& record, bool with_events = false);
MissionRecord record_from_json(const nlohmann::json& j);

struct MissionHooks {
    std::function<bool()> abort_requested;                 // polled before every tick
    std::function<void(const SimEvent&)> on_event;
    std::function<void(const MissionStatus&)> on_status;   // every phase change
    std::function<void(double sim_time)> on_tick;          // after every tick (pacing)
};

struct MissionRequest {
    std::string mission_id;
    std::string outcome_id;
    ScenarioTag scenario_tag = ScenarioTag::untagged;
    RecoveryPolicy policy = RecoveryPolicy::abort_mission;
    double grounding_latency_s = 0.0;
};

/// Runs `plan` on `sim` from its current state. The simulator must be idle
/// (throws SimBusyError otherwise) and is released on return. Throws
/// std::invalid_argument for an empty plan.
MissionRecord run_mission(const MovementPlan& plan, NavSimulator& sim, const MissionRequest& request,
                          const MissionHooks& hooks = {});

struct ScenarioSummary {
    ScenarioTag scenario_tag = ScenarioTag::untagged;
    std::size_t attempts = 0;
    std::size_t successes = 0;
    double success_rate = 0.0;                 // percent
    std::optional<double> mean_duration_s;     // over successful trials; none if no success
};

/// Grouped by tag in ScenarioTag declaration order.
std::vector<ScenarioSummary> summarize(std::span<const MissionRecord> records);

nlohmann::ordered_json to_json(const ScenarioSummary& summary);

/// CSV with the summary table columns, one row per tag.
std::string summary_csv(std::span<const ScenarioSummary> rows);

/// Append-only JSON-lines mission log.
class MissionLog {
public:
    explicit MissionLog(const std::filesystem::path& path);
    void append(const MissionRecord& record);
    const std::filesystem::path& path() const { return path_; }
    static std::vector<MissionRecord> read(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    std::mutex mutex_;
    std::ofstream out_;
};

/// Ordered frames of one mission (simulator events and status changes),
/// shared by any number of readers. Appends never wait on readers.
class MissionFeed {
public:
    struct Frame {
        std::string event;  // "sim" | "status" | "terminal"
        std::string data;   // compact JSON
    };

    void append(Frame frame);
    /// Frames from `from` on, waiting up to `timeout` for at least one; sets
    /// `closed` once the terminal frame has been appended and all frames read.
    std::vector<Frame> read(std::size_t from, std::chrono::milliseconds timeout, bool& closed) const;
    std::size_t size() const;
    bool closed() const;

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<Frame> frames_;
    bool closed_ = false;
};

struct ExecutorConfig {
    SimConfig sim;
    RecoveryPolicy policy = RecoveryPolicy::abort_mission;
    std::vector<FaultSpec> faults;
    std::uint64_t seed = 1;
    /// Wall-clock pacing: sim seconds per wall second. 0 runs flat out.
    double pace = 0.0;
    std::optional<std::filesystem::path> record_log;
};

/// Long-lived worker owning one simulator. try_start reserves the single
/// execution slot atomically; abort is delivered within one tick.
class MissionExecutor {
public:
    MissionExecutor(std::shared_ptr<const WaypointWorld> world, ExecutorConfig config);
    ~MissionExecutor();

    MissionExecutor(const MissionExecutor&) = delete;
    MissionExecutor& operator=(const MissionExecutor&) = delete;

    /// Mission id, or nullopt when a mission is pending or executing.
    std::optional<std::string> try_start(MovementPlan plan, ScenarioTag tag, std::string outcome_id,
                                         double grounding_latency_s = 0.0);

    /// Phase after the request, or nullopt for an unknown id. Idempotent on
    /// terminal missions.
    std::optional<Phase> abort(const std::string& mission_id);

    std::optional<MissionStatus> status(const std::string& mission_id) const;
    std::vector<MissionStatus> list() const;
    std::shared_ptr<const MissionFeed> feed(const std::string& mission_id) const;
    std::optional<MovementPlan> plan(const std::string& mission_id) const;
    std::optional<std::string> outcome_id(const std::string& mission_id) const;
    std::vector<MissionRecord> records() const;
    bool busy() const;

    /// Blocks until the mission is terminal or the timeout passes.
    std::optional<Phase> wait(const std::string& mission_id, std::chrono::milliseconds timeout) const;

private:
    struct Mission;

    void worker_loop();
    void execute(const std::shared_ptr<Mission>& mission);

    std::shared_ptr<const WaypointWorld> world_;
    ExecutorConfig config_;
    NavSimulator sim_;
    std::unique_ptr<MissionLog> log_;

    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::map<std::string, std::shared_ptr<Mission>> missions_;
    std::deque<std::shared_ptr<Mission>> queue_;
    std::vector<MissionRecord> records_;
    bool slot_taken_ = false;
    bool stopping_ = false;
    std::uint64_t counter_ = 0;
    std::thread worker_;
};

}  // namespace quadplan
