// Python extension: the main pipeline operations. Structured results cross the
// boundary as JSON text; quadplan/__init__.py decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "quadplan/bench.hpp"
#include "quadplan/grounding.hpp"
#include "quadplan/mission.hpp"
#include "quadplan/names.hpp"
#include "quadplan/nav_sim.hpp"
#include "quadplan/plan.hpp"
#include "quadplan/prompt.hpp"
#include "quadplan/provider.hpp"
#include "quadplan/world.hpp"

#ifndef QUADPLAN_DATA_DIR
#define QUADPLAN_DATA_DIR "data"
#endif

namespace py = pybind11;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace quadplan;

namespace {

using WorldPtr = std::shared_ptr<WaypointWorld>;

std::string result_json(const PlanResult& r) {
    ordered_json j;
    j["ok"] = r.ok();
    if (r.plan) j["plan"] = ordered_json::parse(canonical_serialize(*r.plan));
    ordered_json defects = ordered_json::array();
    for (const auto& d : r.defects) defects.push_back(to_json(d));
    j["defects"] = std::move(defects);
    return j.dump();
}

std::shared_ptr<const Grounder> mock_grounder(const WorldPtr& world) {
    auto tmpl = std::make_shared<const PromptTemplate>(default_template(*world));
    return std::make_shared<const Grounder>(world, tmpl, std::make_shared<MockProvider>(world));
}

MovementPlan plan_or_throw(std::string_view text, const WaypointWorld& world) {
    PlanResult parsed = parse_plan(text);
    if (parsed.ok()) parsed = validate_plan(*parsed.plan, world);
    if (!parsed.ok()) {
        throw py::value_error("invalid plan: " + parsed.defects.front().location() + ": " +
                              parsed.defects.front().detail);
    }
    return *parsed.plan;
}

}  // namespace

PYBIND11_MODULE(_quadplan, m) {
    m.doc() = "Grounding, validation and simulated execution of robot movement plans";
    m.attr("__version__") = "0.1.0";
    m.attr("DATA_DIR") = QUADPLAN_DATA_DIR;

    py::register_exception<WorldError>(m, "WorldError", PyExc_ValueError);
    py::register_exception<PromptError>(m, "PromptError", PyExc_ValueError);
    py::register_exception<SuiteError>(m, "SuiteError", PyExc_ValueError);

    m.def("canonicalize", [](const std::string& s) { return canonicalize(s); });
    m.def("edit_distance", [](const std::string& a, const std::string& b) { return edit_distance(a, b); });

    py::class_<WaypointWorld, WorldPtr>(m, "World")
        .def_property_readonly("name", &WaypointWorld::name)
        .def_property_readonly("waypoint_names", &WaypointWorld::waypoint_names)
        .def_property_readonly("zone_names", &WaypointWorld::zone_names)
        .def_property_readonly("home", [](const WaypointWorld& w) { return w.home().name; })
        .def("pose", [](const WaypointWorld& w, const std::string& name) {
            const Waypoint* wp = w.find_waypoint(name);
            if (!wp) throw py::key_error(name);
            return py::make_tuple(wp->pose.x, wp->pose.y);
        })
        .def("lookup", [](const WaypointWorld& w, const std::string& name) {
            const LookupResult r = lookup(w, name);
            return py::make_tuple(r.waypoint ? py::object(py::str(r.waypoint->name)) : py::none(),
                                  r.suggestion ? py::object(py::str(*r.suggestion)) : py::none());
        })
        .def("vocabulary_json", [](const WaypointWorld& w) {
            ordered_json j = ordered_json::array();
            for (const auto& e : vocabulary(w)) {
                j.push_back({{"name", e.name}, {"display_name", e.display_name}, {"zone", e.zone}});
            }
            return j.dump();
        })
        .def("document_json", [](const WaypointWorld& w) { return w.source_document().dump(); });

    m.def("load_world", [](const std::filesystem::path& path) -> WorldPtr {
        return std::make_shared<WaypointWorld>(load_world(path));
    });
    m.def("parse_world", [](const std::string& text) -> WorldPtr {
        return std::make_shared<WaypointWorld>(parse_world(text));
    });

    m.def("parse_plan_json", [](const std::string& text) { return result_json(parse_plan(text)); });
    m.def("validate_plan_json", [](const std::string& text, const WorldPtr& world) {
        PlanResult parsed = parse_plan(text);
        if (!parsed.ok()) return result_json(parsed);
        return result_json(validate_plan(*parsed.plan, *world));
    });

    m.def("mock_ground", [](const WorldPtr& world, const std::string& instruction) {
        return mock_ground(*world, instruction);
    });
    m.def("ground_json", [](const WorldPtr& world, const std::string& instruction) {
        return to_json(mock_grounder(world)->ground(instruction)).dump();
    });
    m.def("build_prompt", [](const WorldPtr& world, const std::string& instruction) {
        const PromptBundle b = build_prompt(default_template(*world), *world, instruction);
        return py::make_tuple(b.system_text, b.user_text, b.template_hash);
    });

    m.def(
        "plan_path_json",
        [](const WorldPtr& world, double x, double y, const std::string& goal) {
            const Waypoint* wp = world->find_waypoint(goal);
            if (!wp) throw py::key_error(goal);
            const auto path = plan_path(*world, Point{x, y}, *wp);
            if (!path) return std::string("null");
            ordered_json cells = ordered_json::array();
            for (const auto& c : path->cells) cells.push_back({c.col, c.row});
            return ordered_json{{"goal", goal}, {"length_m", path->length_m}, {"cells", cells}}.dump();
        },
        py::arg("world"), py::arg("x"), py::arg("y"), py::arg("goal"));

    m.def(
        "run_mission_json",
        [](const WorldPtr& world, const std::string& plan_text, std::uint64_t seed, const std::string& faults_text,
           const std::string& policy) {
            const MovementPlan plan = plan_or_throw(plan_text, *world);
            const auto rp = recovery_policy_from_string(policy);
            if (!rp) throw py::value_error("unknown recovery policy '" + policy + "'");
            NavSimulator sim(world);
            sim.reset(seed);
            const json faults = json::parse(faults_text);
            for (const auto& f : faults) {
                try {
                    sim.inject_fault(fault_from_json(f));
                } catch (const std::exception& e) {
                    throw py::value_error(e.what());
                }
            }
            MissionRequest request;
            request.mission_id = "py-mission";
            request.policy = *rp;
            const MissionRecord record = run_mission(plan, sim, request);
            ordered_json j = to_json(record, true);
            ordered_json transitions = ordered_json::array();
            for (const auto& s : record.transitions) {
                transitions.push_back({{"phase", std::string(to_string(s.phase))},
                                       {"action_index", s.action_index ? ordered_json(*s.action_index) : nullptr}});
            }
            j["transitions"] = std::move(transitions);
            return j.dump();
        },
        py::arg("world"), py::arg("plan"), py::arg("seed") = 1, py::arg("faults") = "[]",
        py::arg("policy") = "abort_mission");

    m.def(
        "run_suite_json",
        [](const WorldPtr& world, const std::filesystem::path& suite_path, unsigned jobs) {
            const ScenarioSuite suite = load_suite(suite_path);
            SuiteOptions options;
            options.jobs = jobs;
            SuiteReport report;
            {
                py::gil_scoped_release release;
                report = run_suite(suite, *mock_grounder(world), options);
            }
            ordered_json j;
            j["suite"] = report.suite_name;
            ordered_json summaries = ordered_json::array();
            for (const auto& s : report.summaries) summaries.push_back(to_json(s));
            j["summaries"] = std::move(summaries);
            ordered_json records = ordered_json::array();
            for (const auto& r : report.records) records.push_back(to_json(r));
            j["records"] = std::move(records);
            j["report"] = render_report(report);
            return j.dump();
        },
        py::arg("world"), py::arg("suite"), py::arg("jobs") = 1);
}
