#pragma once

// Movement-plan data model and the strict JSON action format.
//
// Accepted documents:
//   {"response": {"actions": [ ... ]}}   (wrapped, what the model is asked for)
//   {"actions": [ ... ]}                 (bare, the canonical output form)
// Each action is {"command": <goto|wait|explore|halt>, "parameters": {...}}.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace quadplan {

class WaypointWorld;

struct GotoAction {
    std::string waypoint;
    bool operator==(const GotoAction&) const = default;
};

struct WaitAction {
    double duration_s = 0.0;
    bool operator==(const WaitAction&) const = default;
};

struct ExploreAction {
    std::string zone;
    bool operator==(const ExploreAction&) const = default;
};

struct HaltAction {
    bool operator==(const HaltAction&) const = default;
};

using ActionCommand = std::variant<GotoAction, WaitAction, ExploreAction, HaltAction>;

std::string_view command_name(const ActionCommand& action);

struct MovementPlan {
    std::vector<ActionCommand> actions;
    std::string source_text;
    std::string raw_model_output;
    std::string plan_id;
};

// The first seven kinds come from plan parsing and validation; the last two
// are raised by the grounding pipeline before a plan exists.
enum class DefectKind {
    malformed_json,
    missing_actions_array,
    unknown_command,
    bad_parameter,
    unknown_waypoint,
    unknown_zone,
    empty_plan,
    empty_instruction,
    provider_error,
};

std::string_view to_string(DefectKind kind);
std::optional<DefectKind> defect_kind_from_string(std::string_view text);

struct PlanDefect {
    DefectKind kind = DefectKind::malformed_json;
    std::optional<std::size_t> index;  // nullopt: the whole document
    std::string detail;
    std::optional<std::string> suggestion;

    std::string location() const;
};

nlohmann::ordered_json to_json(const PlanDefect& defect);

struct PlanResult {
    std::optional<MovementPlan> plan;
    std::vector<PlanDefect> defects;

    bool ok() const { return plan.has_value(); }
};

/// Outermost balanced JSON object in free text (code fences, prose).
/// Candidates are tried left to right; the first that parses as an object wins.
std::optional<std::string> extract_json_object(std::string_view text);

/// Strict parse. Any bad action fails the whole plan; every offending action
/// is reported. Waypoint and zone names come back canonicalized.
PlanResult parse_plan(std::string_view json_text);

/// Map-aware check. Reports every unknown waypoint/zone (with the nearest
/// known name) and empty plans; returns the plan unchanged when clean.
PlanResult validate_plan(const MovementPlan& plan, const WaypointWorld& world);

nlohmann::ordered_json actions_to_json(const std::vector<ActionCommand>& actions);

/// Bare form, fixed key order, no insignificant whitespace.
std::string canonical_serialize(const MovementPlan& plan);

/// Same as canonical_serialize but under {"response": ...}.
std::string wrapped_serialize(const MovementPlan& plan);

}  // namespace quadplan
