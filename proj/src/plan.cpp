#include "quadplan/plan.hpp"

#include <cmath>
#include <utility>

#include "quadplan/names.hpp"
#include "quadplan/world.hpp"

namespace quadplan {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::pair<DefectKind, std::string_view> kDefectNames[] = {
    {DefectKind::malformed_json, "malformed_json"},
    {DefectKind::missing_actions_array, "missing_actions_array"},
    {DefectKind::unknown_command, "unknown_command"},
    {DefectKind::bad_parameter, "bad_parameter"},
    {DefectKind::unknown_waypoint, "unknown_waypoint"},
    {DefectKind::unknown_zone, "unknown_zone"},
    {DefectKind::empty_plan, "empty_plan"},
    {DefectKind::empty_instruction, "empty_instruction"},
    {DefectKind::provider_error, "provider_error"},
};

PlanDefect document_defect(DefectKind kind, std::string detail) {
    return PlanDefect{kind, std::nullopt, std::move(detail), std::nullopt};
}

PlanDefect action_defect(DefectKind kind, std::size_t index, std::string detail) {
    return PlanDefect{kind, index, std::move(detail), std::nullopt};
}

// Matching '}' for the '{' at `open`, skipping string contents.
std::optional<std::size_t> match_brace(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
    }
    return std::nullopt;
}

std::optional<json> parse_document(std::string_view text) {
    json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (!doc.is_discarded()) return doc;
    if (auto extracted = extract_json_object(text)) {
        return json::parse(*extracted, nullptr, false);
    }
    return std::nullopt;
}

const json* find_actions(const json& doc) {
    if (!doc.is_object()) return nullptr;
    if (auto r = doc.find("response"); r != doc.end() && r->is_object()) {
        if (auto a = r->find("actions"); a != r->end() && a->is_array()) return &*a;
    }
    if (auto a = doc.find("actions"); a != doc.end() && a->is_array()) return &*a;
    return nullptr;
}

// Canonical name for a required string parameter; `error` is set on failure.
std::optional<std::string> name_parameter(const json& params, const char* key, std::string& error) {
    auto it = params.find(key);
    if (it == params.end()) {
        error = std::string("missing parameter '") + key + "'";
        return std::nullopt;
    }
    if (!it->is_string()) {
        error = std::string("parameter '") + key + "' must be a string";
        return std::nullopt;
    }
    std::string name = canonicalize(it->get<std::string>());
    if (name.empty()) {
        error = std::string("parameter '") + key + "' is empty";
        return std::nullopt;
    }
    return name;
}

std::variant<ActionCommand, PlanDefect> parse_action(const json& item, std::size_t index) {
    if (!item.is_object()) {
        return action_defect(DefectKind::unknown_command, index, "action is not an object");
    }
    auto cmd = item.find("command");
    if (cmd == item.end() || !cmd->is_string()) {
        return action_defect(DefectKind::unknown_command, index, "action has no string 'command'");
    }
    const std::string command = cmd->get<std::string>();

    static const json kNoParams = json::object();
    const json* params = &kNoParams;
    if (auto p = item.find("parameters"); p != item.end()) {
        if (p->is_object()) {
            params = &*p;
        } else if (!p->is_null()) {
            return action_defect(DefectKind::bad_parameter, index, "'parameters' must be an object");
        }
    }

    if (command == "goto" || command == "explore") {
        const bool is_goto = command == "goto";
        std::string error;
        auto name = name_parameter(*params, is_goto ? "waypoint" : "zone", error);
        if (!name) return action_defect(DefectKind::bad_parameter, index, std::move(error));
        if (is_goto) return ActionCommand{GotoAction{std::move(*name)}};
        return ActionCommand{ExploreAction{std::move(*name)}};
    }
    if (command == "wait") {
        auto d = params->find("duration");
        if (d == params->end()) {
            return action_defect(DefectKind::bad_parameter, index, "missing parameter 'duration'");
        }
        if (!d->is_number()) {
            return action_defect(DefectKind::bad_parameter, index, "'duration' must be a number");
        }
        const double seconds = d->get<double>();
        if (!std::isfinite(seconds) || seconds < 0.0) {
            return action_defect(DefectKind::bad_parameter, index,
                                 "'duration' must be finite and non-negative");
        }
        return ActionCommand{WaitAction{seconds}};
    }
    if (command == "halt") return ActionCommand{HaltAction{}};

    return action_defect(DefectKind::unknown_command, index, "unknown command '" + command + "'");
}

}  // namespace

std::string_view command_name(const ActionCommand& action) {
    struct Visitor {
        std::string_view operator()(const GotoAction&) const { return "goto"; }
        std::string_view operator()(const WaitAction&) const { return "wait"; }
        std::string_view operator()(const ExploreAction&) const { return "explore"; }
        std::string_view operator()(const HaltAction&) const { return "halt"; }
    };
    return std::visit(Visitor{}, action);
}

std::string_view to_string(DefectKind kind) {
    for (const auto& [k, name] : kDefectNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::optional<DefectKind> defect_kind_from_string(std::string_view text) {
    for (const auto& [k, name] : kDefectNames) {
        if (name == text) return k;
    }
    return std::nullopt;
}

std::string PlanDefect::location() const {
    return index ? std::to_string(*index) : std::string("document");
}

ordered_json to_json(const PlanDefect& defect) {
    ordered_json j;
    j["kind"] = std::string(to_string(defect.kind));
    if (defect.index) {
        j["location"] = *defect.index;
    } else {
        j["location"] = "document";
    }
    j["detail"] = defect.detail;
    if (defect.suggestion) j["suggestion"] = *defect.suggestion;
    return j;
}

std::optional<std::string> extract_json_object(std::string_view text) {
    std::size_t pos = text.find('{');
    while (pos != std::string_view::npos) {
        auto close = match_brace(text, pos);
        if (!close) return std::nullopt;
        std::string_view candidate = text.substr(pos, *close - pos + 1);
        json doc = json::parse(candidate, nullptr, false);
        if (!doc.is_discarded() && doc.is_object()) return std::string(candidate);
        pos = text.find('{', *close + 1);
    }
    return std::nullopt;
}

PlanResult parse_plan(std::string_view json_text) {
    PlanResult result;
    auto doc = parse_document(json_text);
    if (!doc || doc->is_discarded()) {
        result.defects.push_back(
            document_defect(DefectKind::malformed_json, "input is not a JSON document"));
        return result;
    }
    const json* actions = find_actions(*doc);
    if (actions == nullptr) {
        result.defects.push_back(document_defect(
            DefectKind::missing_actions_array, "no actions array under 'response.actions' or 'actions'"));
        return result;
    }

    MovementPlan plan;
    plan.source_text = std::string(json_text);
    plan.raw_model_output = std::string(json_text);
    plan.actions.reserve(actions->size());
    for (std::size_t i = 0; i < actions->size(); ++i) {
        auto parsed = parse_action((*actions)[i], i);
        if (auto* d = std::get_if<PlanDefect>(&parsed)) {
            result.defects.push_back(std::move(*d));
        } else {
            plan.actions.push_back(std::get<ActionCommand>(std::move(parsed)));
        }
    }
    if (result.defects.empty()) result.plan = std::move(plan);
    return result;
}

PlanResult validate_plan(const MovementPlan& plan, const WaypointWorld& world) {
    PlanResult result;
    if (plan.actions.empty()) {
        result.defects.push_back(document_defect(DefectKind::empty_plan, "plan contains no actions"));
        return result;
    }
    const auto waypoint_names = world.waypoint_names();
    const auto zone_names = world.zone_names();
    for (std::size_t i = 0; i < plan.actions.size(); ++i) {
        const auto& action = plan.actions[i];
        if (const auto* g = std::get_if<GotoAction>(&action)) {
            if (world.find_waypoint(g->waypoint) == nullptr) {
                auto d = action_defect(DefectKind::unknown_waypoint, i,
                                       "waypoint '" + g->waypoint + "' is not on the map");
                d.suggestion = nearest_name(g->waypoint, waypoint_names);
                result.defects.push_back(std::move(d));
            }
        } else if (const auto* e = std::get_if<ExploreAction>(&action)) {
            if (world.find_zone(e->zone) == nullptr) {
                auto d = action_defect(DefectKind::unknown_zone, i,
                                       "zone '" + e->zone + "' is not on the map");
                d.suggestion = nearest_name(e->zone, zone_names);
                result.defects.push_back(std::move(d));
            }
        }
    }
    if (result.defects.empty()) result.plan = plan;
    return result;
}

ordered_json actions_to_json(const std::vector<ActionCommand>& actions) {
    ordered_json arr = ordered_json::array();
    for (const auto& action : actions) {
        ordered_json item;
        item["command"] = std::string(command_name(action));
        ordered_json params = ordered_json::object();
        if (const auto* g = std::get_if<GotoAction>(&action)) {
            params["waypoint"] = g->waypoint;
        } else if (const auto* w = std::get_if<WaitAction>(&action)) {
            params["duration"] = w->duration_s;
        } else if (const auto* e = std::get_if<ExploreAction>(&action)) {
            params["zone"] = e->zone;
        }
        item["parameters"] = std::move(params);
        arr.push_back(std::move(item));
    }
    return arr;
}

std::string canonical_serialize(const MovementPlan& plan) {
    ordered_json doc;
    doc["actions"] = actions_to_json(plan.actions);
    return doc.dump();
}

std::string wrapped_serialize(const MovementPlan& plan) {
    ordered_json inner;
    inner["actions"] = actions_to_json(plan.actions);
    ordered_json doc;
    doc["response"] = std::move(inner);
    return doc.dump();
}

}  // namespace quadplan
