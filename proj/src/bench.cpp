#include "quadplan/bench.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace quadplan {

using nlohmann::json;
namespace fs = std::filesystem;

ScenarioSuite parse_suite(const json& j) {
    if (!j.is_object()) throw SuiteError("suite: top level must be an object");
    ScenarioSuite suite;
    if (!j.contains("name") || !j.at("name").is_string()) throw SuiteError("suite: 'name' must be a string");
    suite.name = j.at("name").get<std::string>();
    if (!j.contains("trials") || !j.at("trials").is_array()) throw SuiteError("suite: 'trials' must be an array");
    if (j.at("trials").empty()) throw SuiteError("suite: 'trials' is empty");
    std::size_t index = 0;
    for (const auto& t : j.at("trials")) {
        const std::string where = "suite: trial " + std::to_string(index++);
        if (!t.is_object()) throw SuiteError(where + ": must be an object");
        SuiteTrial trial;
        if (!t.contains("instruction") || !t.at("instruction").is_string() ||
            t.at("instruction").get<std::string>().empty()) {
            throw SuiteError(where + ": 'instruction' must be a non-empty string");
        }
        trial.instruction = t.at("instruction").get<std::string>();
        const auto tag = t.contains("scenario_tag") && t.at("scenario_tag").is_string()
                             ? scenario_tag_from_string(t.at("scenario_tag").get<std::string>())
                             : std::nullopt;
        if (!tag || *tag == ScenarioTag::untagged) throw SuiteError(where + ": 'scenario_tag' must name a category");
        trial.scenario_tag = *tag;
        if (!t.contains("seed") || !t.at("seed").is_number_unsigned()) {
            throw SuiteError(where + ": 'seed' must be a non-negative integer");
        }
        trial.seed = t.at("seed").get<std::uint64_t>();
        if (t.contains("repetitions")) {
            if (!t.at("repetitions").is_number_unsigned() || t.at("repetitions").get<std::size_t>() == 0) {
                throw SuiteError(where + ": 'repetitions' must be a positive integer");
            }
            trial.repetitions = t.at("repetitions").get<std::size_t>();
        }
        if (t.contains("faults")) {
            if (!t.at("faults").is_array()) throw SuiteError(where + ": 'faults' must be an array");
            for (const auto& f : t.at("faults")) {
                try {
                    trial.faults.push_back(fault_from_json(f));
                } catch (const std::exception& e) {
                    throw SuiteError(where + ": " + e.what());
                }
            }
        }
        suite.trials.push_back(std::move(trial));
    }
    return suite;
}

ScenarioSuite load_suite(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SuiteError(path.string() + ": cannot open suite");
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw SuiteError(path.string() + ": not valid JSON");
    try {
        return parse_suite(j);
    } catch (const SuiteError& e) {
        throw SuiteError(path.string() + ": " + e.what());
    }
}

void check_suite(const ScenarioSuite& suite, const WaypointWorld& world) {
    for (std::size_t i = 0; i < suite.trials.size(); ++i) {
        for (const auto& f : suite.trials[i].faults) {
            const std::string& wp = std::visit([](const auto& x) -> const std::string& { return x.waypoint; }, f);
            if (!wp.empty() && !world.find_waypoint(wp)) {
                throw SuiteError("suite: trial " + std::to_string(i) + ": fault names unknown waypoint '" + wp + "'");
            }
            if (const auto* a = std::get_if<ArrivalFault>(&f); a && !(a->probability >= 0.0 && a->probability <= 1.0)) {
                throw SuiteError("suite: trial " + std::to_string(i) + ": fault probability outside [0, 1]");
            }
        }
    }
}

namespace {

struct Job {
    std::size_t trial = 0;
    std::size_t repetition = 0;
    std::size_t ordinal = 0;
};

MissionRecord run_one(const ScenarioSuite& suite, const Job& job, const Grounder& grounder,
                      const SuiteOptions& options) {
    const SuiteTrial& trial = suite.trials[job.trial];
    char buf[48];
    std::snprintf(buf, sizeof buf, "t%03zu-r%03zu", job.trial, job.repetition);
    const std::string outcome_id = buf;
    std::snprintf(buf, sizeof buf, "m-%06zu", job.ordinal + 1);
    const std::string mission_id = buf;

    const GroundingOutcome outcome = grounder.ground(trial.instruction, outcome_id);
    if (!outcome.ok()) {
        MissionRecord r;
        r.mission_id = mission_id;
        r.outcome_id = outcome_id;
        r.scenario_tag = trial.scenario_tag;
        r.final_phase = Phase::failed;
        r.failure_detail = "grounding failed at " + std::string(to_string(outcome.stage)) +
                           (outcome.defects.empty() ? "" : ": " + outcome.defects.front().detail);
        return r;
    }

    NavSimulator sim(grounder.shared_world(), options.sim);
    const std::uint64_t seed = trial.seed + job.repetition;
    sim.reset(seed);
    for (const auto& f : trial.faults) sim.inject_fault(f);

    MissionRequest request;
    request.mission_id = mission_id;
    request.outcome_id = outcome_id;
    request.scenario_tag = trial.scenario_tag;
    request.policy = options.policy;
    request.grounding_latency_s = outcome.provider_latency_s;
    MissionRecord record = run_mission(*outcome.plan, sim, request);
    record.events.clear();
    return record;
}

}  // namespace

SuiteReport run_suite(const ScenarioSuite& suite, const Grounder& grounder, const SuiteOptions& options) {
    check_suite(suite, grounder.world());
    std::vector<Job> jobs;
    for (std::size_t t = 0; t < suite.trials.size(); ++t) {
        for (std::size_t r = 0; r < suite.trials[t].repetitions; ++r) jobs.push_back({t, r, jobs.size()});
    }

    SuiteReport report;
    report.suite_name = suite.name;
    report.sim = options.sim;
    report.records.resize(jobs.size());

    const unsigned workers = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(jobs.size())));
    if (workers <= 1) {
        for (const auto& job : jobs) report.records[job.ordinal] = run_one(suite, job, grounder, options);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = next++; i < jobs.size(); i = next++) {
                        report.records[i] = run_one(suite, jobs[i], grounder, options);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    report.summaries = summarize(report.records);
    return report;
}

std::string render_report(const SuiteReport& report) {
    std::ostringstream out;
    char line[160];
    out << "Scenario replay: " << report.suite_name << "\n";
    std::snprintf(line, sizeof line, "Simulator: %.2f m/s cruise speed, %.2f s ticks.\n", report.sim.cruise_speed,
                  report.sim.tick_s);
    out << line;
    out << "Durations are simulated motion times and are not comparable to timings measured on a physical\n"
           "robot. Compare the ordering of the categories and the success rates.\n\n";
    std::snprintf(line, sizeof line, "%-28s %16s %16s %15s\n", "Scenario Category", "Avg. Duration(s)",
                  "Success Rate(%)", "Total Attempts");
    out << line;
    out << std::string(78, '-') << "\n";
    for (const auto& s : report.summaries) {
        char duration[32] = "-";
        if (s.mean_duration_s) std::snprintf(duration, sizeof duration, "%.2f", *s.mean_duration_s);
        std::snprintf(line, sizeof line, "%-28s %16s %16.2f %15zu\n", std::string(display_name(s.scenario_tag)).c_str(),
                      duration, s.success_rate, s.attempts);
        out << line;
    }
    std::size_t failures = 0;
    for (const auto& r : report.records) failures += r.success ? 0 : 1;
    out << "\n" << report.records.size() << " trials, " << failures << " failed.\n";
    for (const auto& r : report.records) {
        if (!r.success) out << "  " << r.outcome_id << " (" << to_string(r.scenario_tag) << "): " << r.failure_detail << "\n";
    }
    return out.str();
}

void write_report(const SuiteReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    auto write = [&](const char* name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error((dir / name).string() + ": cannot write");
        out << content;
    };
    std::string records;
    for (const auto& r : report.records) records += to_json(r).dump() + "\n";
    write("records.jsonl", records);
    write("summary.csv", summary_csv(report.summaries));
    write("report.txt", render_report(report));
}

}  // namespace quadplan
