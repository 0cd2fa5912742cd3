#include "quadplan/mission.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace quadplan {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::pair<ScenarioTag, std::string_view> kTagNames[] = {
    {ScenarioTag::single_room_short, "single_room_short"},
    {ScenarioTag::multi_room_short, "multi_room_short"},
    {ScenarioTag::multi_room_long, "multi_room_long"},
    {ScenarioTag::cross_zone, "cross_zone"},
    {ScenarioTag::untagged, "untagged"},
};

constexpr std::pair<RecoveryPolicy, std::string_view> kPolicyNames[] = {
    {RecoveryPolicy::abort_mission, "abort_mission"},
    {RecoveryPolicy::skip_action, "skip_action"},
    {RecoveryPolicy::retry_once_then_abort, "retry_once_then_abort"},
};

constexpr std::pair<Phase, std::string_view> kPhaseNames[] = {
    {Phase::pending, "pending"},     {Phase::executing, "executing"}, {Phase::completed, "completed"},
    {Phase::failed, "failed"},       {Phase::aborted, "aborted"},
};

double round_micro(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

std::string_view to_string(Phase phase) {
    for (const auto& [p, name] : kPhaseNames) {
        if (p == phase) return name;
    }
    return "unknown";
}

std::string_view to_string(RecoveryPolicy policy) {
    for (const auto& [p, name] : kPolicyNames) {
        if (p == policy) return name;
    }
    return "unknown";
}

std::string_view to_string(ScenarioTag tag) {
    for (const auto& [t, name] : kTagNames) {
        if (t == tag) return name;
    }
    return "unknown";
}

std::optional<RecoveryPolicy> recovery_policy_from_string(std::string_view text) {
    for (const auto& [p, name] : kPolicyNames) {
        if (name == text) return p;
    }
    return std::nullopt;
}

std::optional<ScenarioTag> scenario_tag_from_string(std::string_view text) {
    for (const auto& [t, name] : kTagNames) {
        if (name == text) return t;
    }
    return std::nullopt;
}

std::string_view display_name(ScenarioTag tag) {
    switch (tag) {
        case ScenarioTag::single_room_short: return "Short Dist. (Single-Room)";
        case ScenarioTag::multi_room_short: return "Short Dist. (Multi-Room)";
        case ScenarioTag::multi_room_long: return "Long Dist. (Multi-Room)";
        case ScenarioTag::cross_zone: return "Cross-Zone";
        case ScenarioTag::untagged: return "Untagged";
    }
    return "Unknown";
}

// ---------------------------------------------------------------------------

bool StatusMachine::legal(const Step& from, const Step& to) {
    switch (from.phase) {
        case Phase::pending:
            return to.phase == Phase::executing && to.action_index == std::size_t{0};
        case Phase::executing:
            if (to.phase == Phase::executing) {
                return to.action_index && from.action_index && *to.action_index > *from.action_index;
            }
            return is_terminal(to.phase) && !to.action_index;
        default:
            return false;
    }
}

void StatusMachine::execute(std::size_t index) {
    const Step next{Phase::executing, index};
    if (!legal(current_, next)) {
        throw std::logic_error("illegal transition " + std::string(to_string(current_.phase)) + " -> executing(" +
                               std::to_string(index) + ")");
    }
    current_ = next;
    history_.push_back(next);
}

void StatusMachine::finish(Phase terminal) {
    const Step next{terminal, std::nullopt};
    if (!legal(current_, next)) {
        throw std::logic_error("illegal transition " + std::string(to_string(current_.phase)) + " -> " +
                               std::string(to_string(terminal)));
    }
    current_ = next;
    history_.push_back(next);
}

ordered_json to_json(const MissionStatus& s) {
    ordered_json j;
    j["mission_id"] = s.mission_id;
    j["phase"] = std::string(to_string(s.phase));
    if (s.action_index) {
        j["action_index"] = *s.action_index;
    } else {
        j["action_index"] = nullptr;
    }
    j["started_at"] = round_micro(s.started_at);
    j["finished_at"] = round_micro(s.finished_at);
    j["x"] = round_micro(s.current_pose.x);
    j["y"] = round_micro(s.current_pose.y);
    if (!s.failure_detail.empty()) j["failure_detail"] = s.failure_detail;
    return j;
}

ordered_json to_json(const MissionRecord& r, bool with_events) {
    ordered_json j;
    j["mission_id"] = r.mission_id;
    j["outcome_id"] = r.outcome_id;
    j["plan_id"] = r.plan_id;
    j["scenario_tag"] = std::string(to_string(r.scenario_tag));
    j["phase"] = std::string(to_string(r.final_phase));
    j["success"] = r.success;
    j["started_at"] = round_micro(r.started_at);
    j["finished_at"] = round_micro(r.finished_at);
    j["duration_s"] = round_micro(r.duration_s);
    j["end_to_end_s"] = round_micro(r.end_to_end_s);
    j["skipped_actions"] = r.skipped_actions;
    if (!r.failure_detail.empty()) j["failure_detail"] = r.failure_detail;
    j["event_count"] = r.events.size();
    if (with_events) {
        ordered_json events = ordered_json::array();
        for (const auto& e : r.events) events.push_back(to_json(e));
        j["events"] = std::move(events);
    }
    return j;
}

MissionRecord record_from_json(const json& j) {
    MissionRecord r;
    r.mission_id = j.at("mission_id").get<std::string>();
    r.outcome_id = j.value("outcome_id", std::string{});
    r.plan_id = j.value("plan_id", std::string{});
    const auto tag = scenario_tag_from_string(j.value("scenario_tag", std::string("untagged")));
    if (!tag) throw std::invalid_argument("mission record: unknown scenario tag");
    r.scenario_tag = *tag;
    const std::string phase = j.at("phase").get<std::string>();
    bool known = false;
    for (const auto& [p, name] : kPhaseNames) {
        if (name == phase) {
            r.final_phase = p;
            known = true;
        }
    }
    if (!known) throw std::invalid_argument("mission record: unknown phase '" + phase + "'");
    r.success = j.at("success").get<bool>();
    r.started_at = j.value("started_at", 0.0);
    r.finished_at = j.value("finished_at", 0.0);
    r.duration_s = j.at("duration_s").get<double>();
    r.end_to_end_s = j.value("end_to_end_s", r.duration_s);
    r.skipped_actions = j.value("skipped_actions", std::size_t{0});
    r.failure_detail = j.value("failure_detail", std::string{});
    return r;
}

// ---------------------------------------------------------------------------

MissionRecord run_mission(const MovementPlan& plan, NavSimulator& sim, const MissionRequest& request,
                          const MissionHooks& hooks) {
    if (plan.actions.empty()) throw std::invalid_argument("run_mission: plan has no actions");
    if (!sim.try_acquire()) throw SimBusyError();
    struct Release {
        NavSimulator& sim;
        ~Release() { sim.release(); }
    } release{sim};

    MissionRecord record;
    record.mission_id = request.mission_id;
    record.outcome_id = request.outcome_id;
    record.plan_id = plan.plan_id;
    record.scenario_tag = request.scenario_tag;
    record.started_at = sim.state().sim_time;

    StatusMachine machine;
    MissionStatus status;
    status.mission_id = request.mission_id;
    status.started_at = record.started_at;
    status.current_pose = sim.state().position;

    auto publish_status = [&] {
        status.phase = machine.phase();
        status.action_index = machine.action_index();
        status.current_pose = sim.state().position;
        if (hooks.on_status) hooks.on_status(status);
    };
    std::vector<SimEvent> batch;
    auto flush = [&] {
        for (auto& e : batch) {
            if (hooks.on_event) hooks.on_event(e);
            record.events.push_back(std::move(e));
        }
        batch.clear();
    };
    auto abort_requested = [&] { return hooks.abort_requested && hooks.abort_requested(); };

    Phase terminal = Phase::completed;
    for (std::size_t i = 0; i < plan.actions.size(); ++i) {
        machine.execute(i);
        publish_status();
        if (abort_requested()) {
            terminal = Phase::aborted;
            break;
        }

        bool retried = false;
        ActionStatus outcome = ActionStatus::running;
        while (true) {
            sim.begin(plan.actions[i], batch);
            flush();
            outcome = sim.status();
            while (outcome == ActionStatus::running) {
                if (abort_requested()) break;
                outcome = sim.step(batch);
                flush();
                if (hooks.on_tick) hooks.on_tick(sim.state().sim_time);
            }
            if (outcome == ActionStatus::failed && request.policy == RecoveryPolicy::retry_once_then_abort &&
                !retried) {
                retried = true;
                continue;
            }
            break;
        }

        if (outcome == ActionStatus::running) {
            terminal = Phase::aborted;
            record.failure_detail = "aborted by operator";
            break;
        }
        if (outcome == ActionStatus::halted) {
            terminal = Phase::aborted;
            record.failure_detail = "halt action at index " + std::to_string(i);
            break;
        }
        if (outcome == ActionStatus::failed) {
            const std::string detail =
                record.events.empty() ? std::string("action failed") : record.events.back().detail;
            if (request.policy == RecoveryPolicy::skip_action) {
                ++record.skipped_actions;
                continue;
            }
            terminal = Phase::failed;
            record.failure_detail = "action " + std::to_string(i) + ": " + detail;
            break;
        }
    }
    if (terminal == Phase::aborted && record.failure_detail.empty()) record.failure_detail = "aborted by operator";

    record.finished_at = sim.state().sim_time;
    record.duration_s = record.finished_at - record.started_at;
    record.end_to_end_s = record.duration_s + request.grounding_latency_s;
    record.final_phase = terminal;
    record.success = terminal == Phase::completed;

    machine.finish(terminal);
    status.finished_at = record.finished_at;
    status.failure_detail = record.failure_detail;
    publish_status();
    record.transitions = machine.history();
    return record;
}

std::vector<ScenarioSummary> summarize(std::span<const MissionRecord> records) {
    std::vector<ScenarioSummary> out;
    for (const auto& [tag, _] : kTagNames) {
        ScenarioSummary s;
        s.scenario_tag = tag;
        double total = 0.0;
        for (const auto& r : records) {
            if (r.scenario_tag != tag) continue;
            ++s.attempts;
            if (r.success) {
                ++s.successes;
                total += r.duration_s;
            }
        }
        if (s.attempts == 0) continue;
        s.success_rate = 100.0 * static_cast<double>(s.successes) / static_cast<double>(s.attempts);
        if (s.successes > 0) s.mean_duration_s = total / static_cast<double>(s.successes);
        out.push_back(s);
    }
    return out;
}

ordered_json to_json(const ScenarioSummary& s) {
    ordered_json j;
    j["scenario_tag"] = std::string(to_string(s.scenario_tag));
    j["scenario_category"] = std::string(display_name(s.scenario_tag));
    j["attempts"] = s.attempts;
    j["successes"] = s.successes;
    j["success_rate"] = s.success_rate;
    if (s.mean_duration_s) {
        j["mean_duration_s"] = round_micro(*s.mean_duration_s);
    } else {
        j["mean_duration_s"] = nullptr;
    }
    return j;
}

std::string summary_csv(std::span<const ScenarioSummary> rows) {
    std::ostringstream out;
    out << "scenario_tag,scenario_category,avg_duration_s,success_rate_pct,total_attempts,successes\n";
    for (const auto& s : rows) {
        char duration[32] = "";
        if (s.mean_duration_s) std::snprintf(duration, sizeof duration, "%.2f", *s.mean_duration_s);
        char rate[32];
        std::snprintf(rate, sizeof rate, "%.2f", s.success_rate);
        out << to_string(s.scenario_tag) << ",\"" << display_name(s.scenario_tag) << "\"," << duration << ","
            << rate << "," << s.attempts << "," << s.successes << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------

MissionLog::MissionLog(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app | std::ios::binary);
    if (!out_) throw std::runtime_error(path.string() + ": cannot open mission log");
}

void MissionLog::append(const MissionRecord& record) {
    const std::string line = to_json(record).dump() + "\n";
    std::lock_guard lock(mutex_);
    out_ << line;
    out_.flush();
}

std::vector<MissionRecord> MissionLog::read(const std::filesystem::path& path) {
    std::vector<MissionRecord> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed record");
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

// ---------------------------------------------------------------------------

void MissionFeed::append(Frame frame) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        if (frame.event == "terminal") closed_ = true;
        frames_.push_back(std::move(frame));
    }
    cv_.notify_all();
}

std::vector<MissionFeed::Frame> MissionFeed::read(std::size_t from, std::chrono::milliseconds timeout,
                                                  bool& closed) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return frames_.size() > from || closed_; });
    std::vector<Frame> out;
    for (std::size_t i = from; i < frames_.size(); ++i) out.push_back(frames_[i]);
    closed = closed_;
    return out;
}

std::size_t MissionFeed::size() const {
    std::lock_guard lock(mutex_);
    return frames_.size();
}

bool MissionFeed::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

// ---------------------------------------------------------------------------

struct MissionExecutor::Mission {
    MovementPlan plan;
    MissionRequest request;
    MissionStatus status;
    std::uint64_t seed = 0;
    std::atomic<bool> abort_requested{false};
    std::shared_ptr<MissionFeed> feed = std::make_shared<MissionFeed>();
};

MissionExecutor::MissionExecutor(std::shared_ptr<const WaypointWorld> world, ExecutorConfig config)
    : world_(std::move(world)), config_(std::move(config)), sim_(world_, config_.sim) {
    for (const auto& f : config_.faults) sim_.inject_fault(f);
    if (config_.record_log) log_ = std::make_unique<MissionLog>(*config_.record_log);
    worker_ = std::thread([this] { worker_loop(); });
}

MissionExecutor::~MissionExecutor() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
        for (auto& [_, m] : missions_) m->abort_requested = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

std::optional<std::string> MissionExecutor::try_start(MovementPlan plan, ScenarioTag tag, std::string outcome_id,
                                                      double grounding_latency_s) {
    if (plan.actions.empty()) throw std::invalid_argument("executor: plan has no actions");
    auto mission = std::make_shared<Mission>();
    {
        std::lock_guard lock(mutex_);
        if (slot_taken_ || stopping_) return std::nullopt;
        slot_taken_ = true;
        char buf[32];
        std::snprintf(buf, sizeof buf, "m-%06llu", static_cast<unsigned long long>(++counter_));
        mission->plan = std::move(plan);
        mission->request.mission_id = buf;
        mission->request.outcome_id = std::move(outcome_id);
        mission->request.scenario_tag = tag;
        mission->request.policy = config_.policy;
        mission->request.grounding_latency_s = grounding_latency_s;
        mission->status.mission_id = buf;
        mission->seed = config_.seed + counter_;
        mission->status.current_pose = sim_.state().position;
        missions_.emplace(buf, mission);
        queue_.push_back(mission);
    }
    mission->feed->append({"status", to_json(mission->status).dump()});
    cv_.notify_all();
    return mission->request.mission_id;
}

std::optional<Phase> MissionExecutor::abort(const std::string& mission_id) {
    std::shared_ptr<Mission> m;
    {
        std::lock_guard lock(mutex_);
        auto it = missions_.find(mission_id);
        if (it == missions_.end()) return std::nullopt;
        m = it->second;
        if (is_terminal(m->status.phase)) return m->status.phase;
        m->abort_requested = true;
    }
    cv_.notify_all();
    // Delivered at the next tick boundary; report the settled phase.
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, std::chrono::seconds(5), [&] { return is_terminal(m->status.phase); });
    return m->status.phase;
}

std::optional<MissionStatus> MissionExecutor::status(const std::string& mission_id) const {
    std::lock_guard lock(mutex_);
    auto it = missions_.find(mission_id);
    if (it == missions_.end()) return std::nullopt;
    return it->second->status;
}

std::vector<MissionStatus> MissionExecutor::list() const {
    std::lock_guard lock(mutex_);
    std::vector<MissionStatus> out;
    for (const auto& [_, m] : missions_) out.push_back(m->status);
    return out;
}

std::shared_ptr<const MissionFeed> MissionExecutor::feed(const std::string& mission_id) const {
    std::lock_guard lock(mutex_);
    auto it = missions_.find(mission_id);
    if (it == missions_.end()) return nullptr;
    return it->second->feed;
}

std::optional<MovementPlan> MissionExecutor::plan(const std::string& mission_id) const {
    std::lock_guard lock(mutex_);
    auto it = missions_.find(mission_id);
    if (it == missions_.end()) return std::nullopt;
    return it->second->plan;
}

std::optional<std::string> MissionExecutor::outcome_id(const std::string& mission_id) const {
    std::lock_guard lock(mutex_);
    auto it = missions_.find(mission_id);
    if (it == missions_.end()) return std::nullopt;
    return it->second->request.outcome_id;
}

std::vector<MissionRecord> MissionExecutor::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

bool MissionExecutor::busy() const {
    std::lock_guard lock(mutex_);
    return slot_taken_;
}

std::optional<Phase> MissionExecutor::wait(const std::string& mission_id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    auto it = missions_.find(mission_id);
    if (it == missions_.end()) return std::nullopt;
    auto m = it->second;
    cv_.wait_for(lock, timeout, [&] { return is_terminal(m->status.phase); });
    return m->status.phase;
}

void MissionExecutor::worker_loop() {
    while (true) {
        std::shared_ptr<Mission> next;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_ && queue_.empty()) return;
            next = queue_.front();
            queue_.pop_front();
        }
        execute(next);
    }
}

void MissionExecutor::execute(const std::shared_ptr<Mission>& mission) {
    sim_.start_mission(mission->seed);

    MissionHooks hooks;
    hooks.abort_requested = [&] { return mission->abort_requested.load(); };
    hooks.on_event = [&](const SimEvent& e) {
        mission->feed->append({"sim", to_json(e).dump()});
        if (e.kind == SimEventKind::pose_update) {
            std::lock_guard lock(mutex_);
            mission->status.current_pose = e.position;
        }
    };
    hooks.on_status = [&](const MissionStatus& s) {
        if (!is_terminal(s.phase)) {
            {
                std::lock_guard lock(mutex_);
                mission->status = s;
            }
            mission->feed->append({"status", to_json(s).dump()});
        }
    };
    if (config_.pace > 0.0) {
        const auto tick = std::chrono::duration<double>(config_.sim.tick_s / config_.pace);
        hooks.on_tick = [&, tick](double) {
            std::unique_lock lock(mutex_);
            cv_.wait_for(lock, tick, [&] { return mission->abort_requested.load(); });
        };
    }

    MissionRecord record = run_mission(mission->plan, sim_, mission->request, hooks);
    if (log_) log_->append(record);

    MissionStatus final_status = mission->status;
    final_status.phase = record.final_phase;
    final_status.action_index.reset();
    final_status.finished_at = record.finished_at;
    final_status.current_pose = sim_.state().position;
    final_status.failure_detail = record.failure_detail;
    {
        std::lock_guard lock(mutex_);
        records_.push_back(std::move(record));
        mission->status = final_status;
        slot_taken_ = false;
    }
    mission->feed->append({"terminal", to_json(final_status).dump()});
    cv_.notify_all();
}

}  // namespace quadplan
