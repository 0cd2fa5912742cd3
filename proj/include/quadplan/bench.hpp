#pragma once

// Offline scenario replay: every trial is grounded and executed on a fresh
// simulator under its own seed, then summarized per scenario tag.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "quadplan/grounding.hpp"
#include "quadplan/mission.hpp"

namespace quadplan {

class SuiteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SuiteTrial {
    std::string instruction;
    ScenarioTag scenario_tag = ScenarioTag::single_room_short;
    std::uint64_t seed = 0;
    std::size_t repetitions = 1;  // repetition r runs under seed + r
    std::vector<FaultSpec> faults;
};

struct ScenarioSuite {
    std::string name;
    std::vector<SuiteTrial> trials;
};

/// Tags must be one of the four scenario categories; seeds are required.
/// Throws SuiteError.
ScenarioSuite parse_suite(const nlohmann::json& j);
ScenarioSuite load_suite(const std::filesystem::path& path);

/// Fault waypoints exist in `world`. Throws SuiteError.
void check_suite(const ScenarioSuite& suite, const WaypointWorld& world);

struct SuiteOptions {
    SimConfig sim;
    RecoveryPolicy policy = RecoveryPolicy::abort_mission;
    /// Trials run on this many threads, each with its own simulator. The
    /// report is identical to the sequential one.
    unsigned jobs = 1;
};

struct SuiteReport {
    std::string suite_name;
    SimConfig sim;
    std::vector<MissionRecord> records;  // expansion order: trial, then repetition
    std::vector<ScenarioSummary> summaries;
};

SuiteReport run_suite(const ScenarioSuite& suite, const Grounder& grounder, const SuiteOptions& options = {});

/// Plain-text table: Scenario Category, Avg. Duration(s), Success Rate(%),
/// Total Attempts, under a header stating how to read the durations.
std::string render_report(const SuiteReport& report);

/// Writes records.jsonl, summary.csv and report.txt into `dir`.
void write_report(const SuiteReport& report, const std::filesystem::path& dir);

}  // namespace quadplan
