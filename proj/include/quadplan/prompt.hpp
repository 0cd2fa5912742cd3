#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace quadplan {

class WaypointWorld;

class PromptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PrimitiveDoc {
    std::string command;
    std::string usage;
};

struct FewShot {
    std::string instruction;
    std::string output;  // model output exactly as the model should write it
};

/// The five ingredients of the planner system prompt. Data, not code: ships
/// as data/templates/planner_prompt.json and loads through load_template.
struct PromptTemplate {
    std::string version;
    std::string preamble;
    std::vector<PrimitiveDoc> primitive_docs;
    std::vector<std::string> constraint_rules;
    std::vector<FewShot> few_shots;
    std::string output_contract;
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::string template_hash;  // sha256 hex of system_text
};

/// Every few-shot output must parse and validate against `world`, and the
/// output contract must ask for the wrapped {"response": {"actions": ...}} form.
void check_template(const PromptTemplate& tmpl, const WaypointWorld& world);

PromptTemplate default_template(const WaypointWorld& world);

PromptTemplate parse_template(std::string_view text, const WaypointWorld& world,
                              std::string_view origin = "<memory>");
PromptTemplate load_template(const std::filesystem::path& path, const WaypointWorld& world);

nlohmann::ordered_json to_json(const PromptTemplate& tmpl);

/// Deterministic byte-for-byte. Throws PromptError on a blank instruction.
PromptBundle build_prompt(const PromptTemplate& tmpl, const WaypointWorld& world,
                          std::string_view instruction);

std::string sha256_hex(std::string_view data);

}  // namespace quadplan
