// quadplan command line: serve, ground, replay, map-check, print-template.
//
// Exit codes: 0 success, 1 failure (a JSON error object on stderr), 2 misuse.

#include <pthread.h>
#include <signal.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "quadplan/bench.hpp"
#include "quadplan/gateway.hpp"
#include "quadplan/grounding.hpp"
#include "quadplan/prompt.hpp"
#include "quadplan/provider.hpp"
#include "quadplan/world.hpp"

#ifndef QUADPLAN_DATA_DIR
#define QUADPLAN_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace quadplan;

namespace {

fs::path data_dir() {
    if (const char* env = std::getenv("QUADPLAN_DATA_DIR"); env && *env) return env;
    return QUADPLAN_DATA_DIR;
}

fs::path default_map() { return data_dir() / "maps" / "tower2_floor9.json"; }

int fail(std::string_view kind, std::string_view detail, ordered_json extra = ordered_json::object()) {
    ordered_json j;
    j["error_kind"] = kind;
    j["detail"] = detail;
    for (auto& [k, v] : extra.items()) j[k] = v;
    std::cerr << j.dump() << "\n";
    return 1;
}

struct Pipeline {
    std::shared_ptr<const WaypointWorld> world;
    std::shared_ptr<const Grounder> grounder;
};

// Map/template/provider from a service config when given, else the shipped
// fixture with the mock provider.
Pipeline make_pipeline(const std::optional<fs::path>& config_path, const std::optional<fs::path>& map,
                       const std::optional<fs::path>& tmpl, bool force_mock) {
    ServiceConfig config;
    if (config_path) config = ServiceConfig::load(*config_path);
    if (!config_path) config.map_path = default_map();
    if (map) config.map_path = *map;
    if (tmpl) config.template_path = *tmpl;
    if (force_mock) config.mock = true;

    Pipeline p;
    p.world = std::make_shared<const WaypointWorld>(load_world(config.map_path));
    auto t = std::make_shared<const PromptTemplate>(config.template_path ? load_template(*config.template_path, *p.world)
                                                                         : default_template(*p.world));
    std::shared_ptr<Provider> provider;
    if (config.mock) {
        provider = std::make_shared<MockProvider>(
            p.world, config.keywords ? load_keyword_table(*config.keywords) : default_keyword_table());
    } else {
        if (!config.provider) throw ConfigError("config: provider section required unless mock is set");
        provider = std::make_shared<HttpChatProvider>(*config.provider);
    }
    std::shared_ptr<OutcomeLog> log;
    if (config.outcome_log) log = std::make_shared<OutcomeLog>(*config.outcome_log);
    GroundingOptions options;
    options.reprompt_on_invalid = config.reprompt_on_invalid;
    p.grounder = std::make_shared<const Grounder>(p.world, t, provider, options, log);
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quadplan: natural-language movement plans for a waypoint-navigating robot"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    std::optional<fs::path> config_path, map_path, template_path;

    // serve
    auto* serve = app.add_subcommand("serve", "Start the HTTP gateway");
    std::optional<std::string> host;
    std::optional<int> port;
    std::optional<double> pace, heartbeat;
    std::optional<fs::path> mission_log, outcome_log;
    bool serve_mock = false;
    serve->add_option("--config", config_path, "Service config (JSON)")->check(CLI::ExistingFile);
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--port", port, "Listen port (0 = ephemeral)");
    serve->add_option("--map", map_path, "Map fixture")->check(CLI::ExistingFile);
    serve->add_option("--template", template_path, "Prompt template")->check(CLI::ExistingFile);
    serve->add_option("--pace", pace, "Simulated seconds per wall second (0 = flat out)");
    serve->add_option("--heartbeat", heartbeat, "SSE heartbeat interval in seconds");
    serve->add_option("--mission-log", mission_log, "Mission record log (JSONL)");
    serve->add_option("--outcome-log", outcome_log, "Grounding outcome log (JSONL)");
    serve->add_flag("--mock", serve_mock, "Use the offline keyword provider");

    // ground
    auto* ground = app.add_subcommand("ground", "Ground one instruction and print the plan");
    std::string instruction;
    bool ground_mock = false;
    std::string format = "wrapped";
    ground->add_option("instruction", instruction, "Natural-language instruction")->required();
    ground->add_flag("--mock", ground_mock, "Use the offline keyword provider");
    ground->add_option("--config", config_path, "Service config (JSON)")->check(CLI::ExistingFile);
    ground->add_option("--map", map_path, "Map fixture")->check(CLI::ExistingFile);
    ground->add_option("--template", template_path, "Prompt template")->check(CLI::ExistingFile);
    ground->add_option("--format", format, "wrapped or canonical")->check(CLI::IsMember({"wrapped", "canonical"}));

    // replay
    auto* replay = app.add_subcommand("replay", "Run a scenario suite and print the summary table");
    std::string suite_arg;
    std::optional<fs::path> out_dir;
    unsigned jobs = 1;
    replay->add_option("suite", suite_arg, "Suite file, or the name of a shipped suite")->required();
    replay->add_option("--out", out_dir, "Write records.jsonl, summary.csv and report.txt here");
    replay->add_option("--jobs", jobs, "Parallel trial workers")->check(CLI::Range(1u, 256u));
    replay->add_option("--config", config_path, "Service config (JSON)")->check(CLI::ExistingFile);
    replay->add_option("--map", map_path, "Map fixture")->check(CLI::ExistingFile);
    replay->add_option("--template", template_path, "Prompt template")->check(CLI::ExistingFile);

    // map-check
    auto* map_check = app.add_subcommand("map-check", "Validate a map fixture");
    fs::path map_file;
    map_check->add_option("file", map_file, "Map fixture")->required();

    // print-template
    auto* print_template = app.add_subcommand("print-template", "Print the built-in prompt template as JSON");
    print_template->add_option("--map", map_path, "Map fixture")->check(CLI::ExistingFile);
    auto* print_keywords = app.add_subcommand("print-keywords", "Print the built-in mock keyword table as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*serve) {
            ServiceConfig config;
            if (config_path) {
                config = ServiceConfig::load(*config_path);
            } else {
                config.map_path = default_map();
            }
            if (host) config.host = *host;
            if (port) config.port = *port;
            if (map_path) config.map_path = *map_path;
            if (template_path) config.template_path = *template_path;
            if (pace) config.pace = *pace;
            if (heartbeat) config.heartbeat_s = *heartbeat;
            if (mission_log) config.mission_log = *mission_log;
            if (outcome_log) config.outcome_log = *outcome_log;
            if (serve_mock) config.mock = true;
            // Worker threads inherit the mask; only sigwait below sees the signals.
            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGINT);
            sigaddset(&signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);
            auto gateway = make_gateway(config);
            const int bound = gateway->start(config.host, config.port);
            std::cerr << ordered_json{{"event", "listening"}, {"host", config.host}, {"port", bound}}.dump()
                      << std::endl;
            int received = 0;
            sigwait(&signals, &received);
            gateway->stop();
            return 0;
        }

        if (*ground) {
            if (!ground_mock && !config_path) {
                return fail("usage", "ground needs --mock or a --config with a provider section");
            }
            const Pipeline p = make_pipeline(config_path, map_path, template_path, ground_mock);
            const GroundingOutcome outcome = p.grounder->ground(instruction);
            if (!outcome.ok()) {
                ordered_json defects = ordered_json::array();
                for (const auto& d : outcome.defects) defects.push_back(to_json(d));
                return fail(outcome.stage == GroundingStage::provider ? "provider_unavailable" : "plan_rejected",
                            "grounding failed at " + std::string(to_string(outcome.stage)),
                            ordered_json{{"defects", std::move(defects)}, {"raw_output", outcome.raw_output}});
            }
            std::cout << (format == "wrapped" ? wrapped_serialize(*outcome.plan) : canonical_serialize(*outcome.plan))
                      << "\n";
            return 0;
        }

        if (*replay) {
            fs::path suite_path = suite_arg;
            if (!fs::exists(suite_path)) suite_path = data_dir() / "suites" / (suite_arg + ".json");
            const ScenarioSuite suite = load_suite(suite_path);
            const Pipeline p = make_pipeline(config_path, map_path, template_path, !config_path);
            SuiteOptions options;
            options.jobs = jobs;
            const SuiteReport report = run_suite(suite, *p.grounder, options);
            if (out_dir) write_report(report, *out_dir);
            std::cout << render_report(report);
            return 0;
        }

        if (*map_check) {
            const WaypointWorld world = load_world(map_file);
            std::cout << ordered_json{{"ok", true},
                                      {"map", world.name()},
                                      {"waypoints", world.waypoints().size()},
                                      {"zones", world.zones().size()}}
                             .dump()
                      << "\n";
            return 0;
        }

        if (*print_template) {
            const WaypointWorld world = load_world(map_path.value_or(default_map()));
            std::cout << to_json(default_template(world)).dump(2) << "\n";
            return 0;
        }

        if (*print_keywords) {
            std::cout << to_json(default_keyword_table()).dump(2) << "\n";
            return 0;
        }
    } catch (const WorldError& e) {
        return fail("map_invalid", e.what());
    } catch (const PromptError& e) {
        return fail("template_invalid", e.what());
    } catch (const SuiteError& e) {
        return fail("suite_invalid", e.what());
    } catch (const ConfigError& e) {
        return fail("config_invalid", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 2;
}
