#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "oracles/dijkstra.hpp"
#include "oracles/kinematics.hpp"
#include "quadplan/mission.hpp"
#include "support/fixture.hpp"

using namespace quadplan;
using namespace std::chrono_literals;

namespace {

constexpr double kSpeed = 0.8;
constexpr double kTick = 0.1;

Cell cell_of(const WaypointWorld& w, const std::string& name) {
    const auto& p = w.find_waypoint(name)->pose;
    return *w.grid().cell_at(Point{p.x, p.y});
}

double leg_time(const WaypointWorld& w, Cell a, Cell b) {
    static const oracle::GridMask mask = [&] {
        oracle::GridMask m;
        m.width = w.grid().width();
        m.height = w.grid().height();
        m.free.resize(w.grid().cell_count());
        for (std::size_t i = 0; i < m.free.size(); ++i) m.free[i] = w.grid().free(w.grid().cell_of_index(i));
        return m;
    }();
    const auto cost = oracle::dijkstra_cost(mask, {a.col, a.row}, {b.col, b.row});
    REQUIRE(cost.has_value());
    return oracle::travel_time(*cost * w.grid().resolution(), kSpeed, kTick);
}

MovementPlan plan_of(std::vector<ActionCommand> actions, std::string id = "plan-test") {
    MovementPlan p;
    p.actions = std::move(actions);
    p.plan_id = std::move(id);
    return p;
}

MissionRequest request(RecoveryPolicy policy = RecoveryPolicy::abort_mission) {
    MissionRequest r;
    r.mission_id = "m-test";
    r.outcome_id = "g-test";
    r.policy = policy;
    return r;
}

bool legal_history(const std::vector<StatusMachine::Step>& h) {
    if (h.empty() || h.front() != StatusMachine::Step{Phase::pending, std::nullopt}) return false;
    for (std::size_t i = 1; i < h.size(); ++i) {
        if (!StatusMachine::legal(h[i - 1], h[i])) return false;
    }
    return is_terminal(h.back().phase);
}

MissionRecord synthetic(ScenarioTag tag, bool success, double duration) {
    MissionRecord r;
    r.mission_id = "m";
    r.scenario_tag = tag;
    r.success = success;
    r.final_phase = success ? Phase::completed : Phase::failed;
    r.duration_s = duration;
    return r;
}

}  // namespace

TEST_CASE("status machine whitelist") {
    using S = StatusMachine::Step;
    const S pending{Phase::pending, std::nullopt};
    CHECK(StatusMachine::legal(pending, S{Phase::executing, 0}));
    CHECK_FALSE(StatusMachine::legal(pending, S{Phase::executing, 1}));
    CHECK_FALSE(StatusMachine::legal(pending, S{Phase::completed, std::nullopt}));
    CHECK_FALSE(StatusMachine::legal(pending, S{Phase::aborted, std::nullopt}));
    CHECK(StatusMachine::legal(S{Phase::executing, 0}, S{Phase::executing, 1}));
    CHECK(StatusMachine::legal(S{Phase::executing, 0}, S{Phase::executing, 3}));
    CHECK_FALSE(StatusMachine::legal(S{Phase::executing, 2}, S{Phase::executing, 2}));
    CHECK_FALSE(StatusMachine::legal(S{Phase::executing, 2}, S{Phase::executing, 1}));
    for (Phase t : {Phase::completed, Phase::failed, Phase::aborted}) {
        CHECK(StatusMachine::legal(S{Phase::executing, 4}, S{t, std::nullopt}));
        CHECK_FALSE(StatusMachine::legal(S{t, std::nullopt}, S{Phase::executing, 0}));
        CHECK_FALSE(StatusMachine::legal(S{t, std::nullopt}, S{Phase::completed, std::nullopt}));
    }
    CHECK_FALSE(StatusMachine::legal(S{Phase::executing, 0}, S{Phase::pending, std::nullopt}));

    StatusMachine m;
    CHECK_THROWS_AS(m.finish(Phase::completed), std::logic_error);
    m.execute(0);
    CHECK_THROWS_AS(m.execute(0), std::logic_error);
    m.execute(1);
    m.finish(Phase::completed);
    CHECK_THROWS_AS(m.finish(Phase::failed), std::logic_error);
    CHECK(m.history().size() == 4);
}

TEST_CASE("enum names round-trip") {
    for (auto t : {ScenarioTag::single_room_short, ScenarioTag::multi_room_short, ScenarioTag::multi_room_long,
                   ScenarioTag::cross_zone, ScenarioTag::untagged}) {
        CHECK(scenario_tag_from_string(to_string(t)) == t);
    }
    for (auto p : {RecoveryPolicy::abort_mission, RecoveryPolicy::skip_action,
                   RecoveryPolicy::retry_once_then_abort}) {
        CHECK(recovery_policy_from_string(to_string(p)) == p);
    }
    CHECK_FALSE(scenario_tag_from_string("everything").has_value());
    CHECK_FALSE(recovery_policy_from_string("pray").has_value());
    CHECK(display_name(ScenarioTag::single_room_short) == "Short Dist. (Single-Room)");
    CHECK(display_name(ScenarioTag::multi_room_short) == "Short Dist. (Multi-Room)");
    CHECK(display_name(ScenarioTag::multi_room_long) == "Long Dist. (Multi-Room)");
    CHECK(display_name(ScenarioTag::cross_zone) == "Cross-Zone");
}

TEST_CASE("randomized missions run in order, stay on free cells and add up") {
    const auto world = testing_support::fixture_world();
    const auto names = world->waypoint_names();
    std::vector<std::string> small_zones;
    for (const auto& [name, zone] : world->zones()) {
        if (zone.members.size() <= 3) small_zones.push_back(name);
    }
    std::mt19937_64 rng(5150);
    std::uniform_int_distribution<std::size_t> pick_wp(0, names.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_zone(0, small_zones.size() - 1);
    std::uniform_int_distribution<int> length(1, 5);
    std::uniform_int_distribution<int> kind(0, 9);
    std::uniform_int_distribution<int> wait_tenths(0, 30);

    for (int trial = 0; trial < 120; ++trial) {
        CAPTURE(trial);
        std::vector<ActionCommand> actions;
        const int n = length(rng);
        for (int i = 0; i < n; ++i) {
            const int k = kind(rng);
            if (k < 7) {
                actions.emplace_back(GotoAction{names[pick_wp(rng)]});
            } else if (k < 9) {
                actions.emplace_back(WaitAction{wait_tenths(rng) / 10.0});
            } else {
                actions.emplace_back(ExploreAction{small_zones[pick_zone(rng)]});
            }
        }

        NavSimulator sim(world);
        sim.reset(static_cast<std::uint64_t>(trial));
        std::vector<std::string> statuses;
        MissionHooks hooks;
        hooks.on_status = [&](const MissionStatus& s) { statuses.emplace_back(to_string(s.phase)); };
        const MissionRecord rec = run_mission(plan_of(actions), sim, request(), hooks);

        REQUIRE(rec.final_phase == Phase::completed);
        CHECK(rec.success);
        CHECK(legal_history(rec.transitions));
        CHECK(rec.transitions.size() == actions.size() + 2);
        CHECK(statuses.size() == actions.size() + 1);
        CHECK(statuses.back() == "completed");
        CHECK_FALSE(sim.busy());

        // Expected visiting order and oracle duration.
        std::vector<std::string> expected_visits;
        Cell at = cell_of(*world, "robot_home");
        double expected = 0.0;
        for (const auto& a : actions) {
            if (const auto* g = std::get_if<GotoAction>(&a)) {
                expected_visits.push_back(g->waypoint);
                const Cell next = cell_of(*world, g->waypoint);
                expected += leg_time(*world, at, next);
                at = next;
            } else if (const auto* e = std::get_if<ExploreAction>(&a)) {
                for (const auto& m : world->find_zone(e->zone)->members) {
                    expected_visits.push_back(m);
                    const Cell next = cell_of(*world, m);
                    expected += leg_time(*world, at, next);
                    at = next;
                }
            } else if (const auto* w = std::get_if<WaitAction>(&a)) {
                expected += w->duration_s;
            }
        }
        std::vector<std::string> visits;
        for (const auto& e : rec.events) {
            if (e.kind == SimEventKind::waypoint_reached || e.kind == SimEventKind::explore_visited) {
                visits.push_back(e.waypoint);
            }
            if (e.kind == SimEventKind::pose_update) {
                const auto cell = world->grid().cell_at(e.position);
                REQUIRE(cell.has_value());
                REQUIRE(world->grid().free(*cell));
            }
        }
        CHECK(visits == expected_visits);
        CHECK(std::abs(rec.duration_s - expected) <= kTick * static_cast<double>(actions.size()) + 1e-9);
        CHECK(rec.duration_s == doctest::Approx(rec.finished_at - rec.started_at));
        double prev = 0.0;
        for (const auto& e : rec.events) {
            CHECK(e.sim_time >= prev - 1e-12);
            prev = e.sim_time;
        }
    }
}

TEST_CASE("aborts land on a tick boundary with a legal history") {
    const auto world = testing_support::fixture_world();
    const auto plan = plan_of({GotoAction{"depan_lemari"}, GotoAction{"ruang_pantry"}, GotoAction{"lift_jauh"}});
    NavSimulator full(world);
    full.reset(1);
    const double full_time = run_mission(plan, full, request()).duration_s;

    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> after(0, static_cast<int>(full_time / kTick) + 5);
    for (int trial = 0; trial < 60; ++trial) {
        const int limit = after(rng);
        int polls = 0;
        MissionHooks hooks;
        hooks.abort_requested = [&] { return polls++ >= limit; };
        NavSimulator sim(world);
        sim.reset(1);
        const MissionRecord rec = run_mission(plan, sim, request(), hooks);
        CAPTURE(limit);
        CHECK(legal_history(rec.transitions));
        CHECK_FALSE(sim.busy());
        if (rec.final_phase == Phase::aborted) {
            CHECK(rec.failure_detail == "aborted by operator");
            CHECK_FALSE(rec.success);
            CHECK(rec.duration_s <= full_time + 1e-9);
            const double ticks = rec.duration_s / kTick;
            CHECK(std::abs(ticks - std::round(ticks)) < 1e-6);
        } else {
            CHECK(rec.final_phase == Phase::completed);
        }
    }
}

TEST_CASE("abort before the first tick still passes through executing(0)") {
    NavSimulator sim(testing_support::fixture_world());
    sim.reset(1);
    MissionHooks hooks;
    hooks.abort_requested = [] { return true; };
    const MissionRecord rec = run_mission(plan_of({GotoAction{"lift_jauh"}}), sim, request(), hooks);
    CHECK(rec.final_phase == Phase::aborted);
    REQUIRE(rec.transitions.size() == 3);
    CHECK(rec.transitions[1] == StatusMachine::Step{Phase::executing, 0});
    CHECK(rec.duration_s == 0.0);
}

TEST_CASE("halt ends the mission as aborted") {
    NavSimulator sim(testing_support::fixture_world());
    sim.reset(1);
    const MissionRecord rec =
        run_mission(plan_of({WaitAction{1.0}, HaltAction{}, GotoAction{"lift_jauh"}}), sim, request());
    CHECK(rec.final_phase == Phase::aborted);
    CHECK(rec.failure_detail == "halt action at index 1");
    CHECK(rec.duration_s == doctest::Approx(1.0));
    CHECK(rec.transitions.size() == 4);
}

TEST_CASE("recovery policies") {
    const auto world = testing_support::fixture_world();
    const auto plan = plan_of({GotoAction{"depan_lemari"}, GotoAction{"depan_meja_solder"}});

    SUBCASE("abort_mission fails on the first failed action") {
        NavSimulator sim(world);
        sim.inject_fault(ArrivalFault{1.0, "depan_lemari"});
        sim.reset(1);
        const MissionRecord rec = run_mission(plan, sim, request(RecoveryPolicy::abort_mission));
        CHECK(rec.final_phase == Phase::failed);
        CHECK(rec.failure_detail == "action 0: arrival at 'depan_lemari' not confirmed");
        CHECK(legal_history(rec.transitions));
        CHECK(rec.transitions.size() == 3);
    }
    SUBCASE("skip_action continues and counts the skip") {
        NavSimulator sim(world);
        sim.inject_fault(ArrivalFault{1.0, "depan_lemari"});
        sim.reset(1);
        const MissionRecord rec = run_mission(plan, sim, request(RecoveryPolicy::skip_action));
        CHECK(rec.final_phase == Phase::completed);
        CHECK(rec.skipped_actions == 1);
        CHECK(rec.success);
    }
    SUBCASE("retry_once_then_abort recovers from one failed draw") {
        // First draw fails (< 0.5), the retry's draw passes.
        std::uint64_t seed = 0;
        for (std::uint64_t s = 1; s < 1000; ++s) {
            std::mt19937_64 e(s);
            const double d1 = static_cast<double>(e() >> 11) * 0x1.0p-53;
            const double d2 = static_cast<double>(e() >> 11) * 0x1.0p-53;
            if (d1 < 0.5 && d2 >= 0.5) {
                seed = s;
                break;
            }
        }
        REQUIRE(seed != 0);
        NavSimulator sim(world);
        sim.inject_fault(ArrivalFault{0.5, "depan_lemari"});
        sim.reset(seed);
        const MissionRecord rec = run_mission(plan_of({GotoAction{"depan_lemari"}}), sim,
                                              request(RecoveryPolicy::retry_once_then_abort));
        CHECK(rec.final_phase == Phase::completed);
        int planned = 0;
        for (const auto& e : rec.events) planned += e.kind == SimEventKind::path_planned ? 1 : 0;
        CHECK(planned == 2);
    }
    SUBCASE("retry_once_then_abort gives up after the retry") {
        NavSimulator sim(world);
        sim.inject_fault(ArrivalFault{1.0, "depan_lemari"});
        sim.reset(1);
        const MissionRecord rec = run_mission(plan, sim, request(RecoveryPolicy::retry_once_then_abort));
        CHECK(rec.final_phase == Phase::failed);
        int failures = 0;
        for (const auto& e : rec.events) failures += e.kind == SimEventKind::plan_failed ? 1 : 0;
        CHECK(failures == 2);
    }
}

TEST_CASE("run_mission guards the simulator") {
    NavSimulator sim(testing_support::fixture_world());
    CHECK_THROWS_AS(run_mission(plan_of({}), sim, request()), std::invalid_argument);
    REQUIRE(sim.try_acquire());
    CHECK_THROWS_AS(run_mission(plan_of({WaitAction{1.0}}), sim, request()), SimBusyError);
    sim.release();
    CHECK_NOTHROW(run_mission(plan_of({WaitAction{1.0}}), sim, request()));
    CHECK_FALSE(sim.busy());
}

TEST_CASE("end-to-end time adds grounding latency") {
    NavSimulator sim(testing_support::fixture_world());
    sim.reset(1);
    MissionRequest r = request();
    r.grounding_latency_s = 1.5;
    const MissionRecord rec = run_mission(plan_of({WaitAction{2.0}}), sim, r);
    CHECK(rec.duration_s == doctest::Approx(2.0));
    CHECK(rec.end_to_end_s == doctest::Approx(3.5));
}

TEST_CASE("summaries count attempts and average successful durations") {
    std::vector<MissionRecord> recs;
    for (int i = 0; i < 25; ++i) recs.push_back(synthetic(ScenarioTag::multi_room_short, i != 3, 30.0 + i % 2));
    for (int i = 0; i < 20; ++i) recs.push_back(synthetic(ScenarioTag::multi_room_long, i % 10 != 0, 80.0));
    for (int i = 0; i < 15; ++i) recs.push_back(synthetic(ScenarioTag::single_room_short, true, 16.0));
    recs.push_back(synthetic(ScenarioTag::cross_zone, false, 5.0));

    const auto rows = summarize(recs);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].scenario_tag == ScenarioTag::single_room_short);
    CHECK(rows[0].success_rate == doctest::Approx(100.0));
    CHECK(rows[0].mean_duration_s == doctest::Approx(16.0));
    CHECK(rows[1].attempts == 25);
    CHECK(rows[1].successes == 24);
    CHECK(rows[1].success_rate == doctest::Approx(96.0));
    // 13 even and 11 odd indices succeed (index 3 failed).
    CHECK(*rows[1].mean_duration_s == doctest::Approx((13 * 30.0 + 11 * 31.0) / 24.0));
    CHECK(rows[2].successes == 18);
    CHECK(rows[2].success_rate == doctest::Approx(90.0));
    CHECK(rows[3].scenario_tag == ScenarioTag::cross_zone);
    CHECK(rows[3].success_rate == 0.0);
    CHECK_FALSE(rows[3].mean_duration_s.has_value());
    CHECK(to_json(rows[3])["mean_duration_s"].is_null());

    CHECK(summary_csv(rows) ==
          "scenario_tag,scenario_category,avg_duration_s,success_rate_pct,total_attempts,successes\n"
          "single_room_short,\"Short Dist. (Single-Room)\",16.00,100.00,15,15\n"
          "multi_room_short,\"Short Dist. (Multi-Room)\",30.46,96.00,25,24\n"
          "multi_room_long,\"Long Dist. (Multi-Room)\",80.00,90.00,20,18\n"
          "cross_zone,\"Cross-Zone\",,0.00,1,0\n");
    CHECK(summarize(std::vector<MissionRecord>{}).empty());
}

TEST_CASE("mission records round-trip through the log") {
    NavSimulator sim(testing_support::fixture_world());
    sim.reset(1);
    MissionRequest r = request();
    r.scenario_tag = ScenarioTag::multi_room_long;
    r.grounding_latency_s = 0.5;
    const MissionRecord rec =
        run_mission(plan_of({GotoAction{"depan_lemari"}, HaltAction{}}, "plan-x"), sim, r);

    const auto j = to_json(rec);
    CHECK_FALSE(j.contains("events"));
    CHECK(j["event_count"] == rec.events.size());
    CHECK(to_json(rec, true)["events"].size() == rec.events.size());

    const auto path = std::filesystem::temp_directory_path() / "quadplan_test_missions.jsonl";
    std::filesystem::remove(path);
    {
        MissionLog log(path);
        log.append(rec);
        log.append(rec);
    }
    const auto back = MissionLog::read(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].mission_id == "m-test");
    CHECK(back[0].plan_id == "plan-x");
    CHECK(back[0].scenario_tag == ScenarioTag::multi_room_long);
    CHECK(back[0].final_phase == Phase::aborted);
    CHECK(back[0].failure_detail == rec.failure_detail);
    CHECK(back[0].duration_s == doctest::Approx(rec.duration_s));
    CHECK(back[0].end_to_end_s == doctest::Approx(rec.end_to_end_s));
    CHECK(to_json(back[1]).dump().size() > 0);
    std::filesystem::remove(path);
    CHECK(MissionLog::read(path).empty());
    CHECK_THROWS_AS(record_from_json(nlohmann::json{{"mission_id", "m"}, {"phase", "dancing"}}),
                    std::invalid_argument);
}

TEST_CASE("mission feed ordering and closure") {
    MissionFeed feed;
    bool closed = false;
    CHECK(feed.read(0, 10ms, closed).empty());
    CHECK_FALSE(closed);
    feed.append({"status", "{}"});
    feed.append({"sim", "{\"n\":1}"});
    auto frames = feed.read(1, 10ms, closed);
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].event == "sim");

    std::thread late([&] {
        std::this_thread::sleep_for(50ms);
        feed.append({"terminal", "{}"});
    });
    frames = feed.read(2, 2000ms, closed);
    late.join();
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].event == "terminal");
    CHECK(closed);
    feed.append({"sim", "{}"});
    CHECK(feed.size() == 3);
    CHECK(feed.closed());
}

TEST_CASE("executor runs one mission at a time") {
    const auto world = testing_support::fixture_world();
    ExecutorConfig cfg;
    cfg.pace = 20.0;
    const auto log_path = std::filesystem::temp_directory_path() / "quadplan_test_exec.jsonl";
    std::filesystem::remove(log_path);
    cfg.record_log = log_path;
    MissionExecutor exec(world, cfg);

    const auto id = exec.try_start(plan_of({GotoAction{"depan_lemari"}, GotoAction{"depan_meja_solder"}}),
                                   ScenarioTag::single_room_short, "g-1", 0.2);
    REQUIRE(id.has_value());
    CHECK(*id == "m-000001");
    CHECK(exec.busy());
    CHECK_FALSE(exec.try_start(plan_of({WaitAction{1.0}}), ScenarioTag::untagged, "g-2").has_value());
    CHECK(exec.outcome_id(*id) == std::string("g-1"));
    CHECK(exec.plan(*id)->actions.size() == 2);

    CHECK(exec.wait(*id, 20s) == Phase::completed);
    CHECK_FALSE(exec.busy());
    const auto feed = exec.feed(*id);
    REQUIRE(feed);
    bool closed = false;
    const auto frames = feed->read(0, 10ms, closed);
    CHECK(closed);
    REQUIRE(frames.size() >= 4);
    CHECK(frames.front().event == "status");
    CHECK(nlohmann::json::parse(frames.front().data)["phase"] == "pending");
    CHECK(frames.back().event == "terminal");
    CHECK(nlohmann::json::parse(frames.back().data)["phase"] == "completed");

    const auto records = exec.records();
    REQUIRE(records.size() == 1);
    CHECK(records[0].end_to_end_s == doctest::Approx(records[0].duration_s + 0.2));
    CHECK(MissionLog::read(log_path).size() == 1);

    const auto second = exec.try_start(plan_of({WaitAction{0.5}}), ScenarioTag::untagged, "g-3");
    REQUIRE(second.has_value());
    CHECK(*second == "m-000002");
    CHECK(exec.wait(*second, 20s) == Phase::completed);
    CHECK(exec.list().size() == 2);
    std::filesystem::remove(log_path);
}

TEST_CASE("executor abort is prompt and idempotent") {
    ExecutorConfig cfg;
    cfg.pace = 1.0;
    MissionExecutor exec(testing_support::fixture_world(), cfg);
    const auto id = exec.try_start(plan_of({GotoAction{"lift_jauh"}}), ScenarioTag::untagged, "g");
    REQUIRE(id);
    std::this_thread::sleep_for(300ms);
    const auto started = std::chrono::steady_clock::now();
    CHECK(exec.abort(*id) == Phase::aborted);
    CHECK(std::chrono::steady_clock::now() - started < 1s);
    CHECK(exec.abort(*id) == Phase::aborted);
    CHECK_FALSE(exec.abort("m-999999").has_value());
    CHECK_FALSE(exec.status("m-999999").has_value());
    CHECK(exec.status(*id)->failure_detail == "aborted by operator");
    CHECK_FALSE(exec.busy());
}

TEST_CASE("executor rejects empty plans") {
    MissionExecutor exec(testing_support::fixture_world(), ExecutorConfig{});
    CHECK_THROWS_AS(exec.try_start(plan_of({}), ScenarioTag::untagged, "g"), std::invalid_argument);
}
