#include "quadplan/prompt.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <sstream>

#include "quadplan/names.hpp"
#include "quadplan/plan.hpp"
#include "quadplan/world.hpp"

namespace quadplan {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kTemplateVersion = "planner-prompt/1";

constexpr std::string_view kPreamble =
    "You are the motion planner of a quadruped robot operating on one floor of an office "
    "building. Users describe errands in natural language; instructions may arrive in any "
    "language, most often Indonesian. Translate each instruction into an ordered movement plan "
    "built only from the action primitives below and only from the waypoints and zones listed "
    "on the map. You do not chat, explain or ask questions: you answer with the plan.";

// Exemplars keep the commands exactly as recorded in the field trials. The
// first listing was printed without its final closing brace; it is repaired here.
constexpr std::string_view kSingleRoomCommand =
    "Saya ingin mengambil barang di lemari lab, kemudian ingin menyoldernya.";
constexpr std::string_view kSingleRoomPlan =
    R"({"response": {"actions": [{"command": "goto", "parameters": {"waypoint": "depan_lemari"}},{"command": "goto","parameters": {"waypoint": "depan_meja_solder"}}]}})";

constexpr std::string_view kMultiRoomCommand =
    "Saya ingin mengambil barang di lemari lab, kemudian juga mengambil barang di meja solder. "
    "Setelah itu saya ingin pergi ke lab TW903";
constexpr std::string_view kMultiRoomPlan =
    R"({ "response": { "actions": [ {"command": "goto", "parameters": {"waypoint": "depan_lemari"}}, {"command": "goto", "parameters": {"waypoint": "depan_meja_solder"}}, {"command": "goto", "parameters": {"waypoint": "depan_pintu_lab_903_luar"}} ] } })";

constexpr std::string_view kLongCommand =
    "Ada acara halal bi halal di lantai 10. Namun sebelum itu, saya perlu mengambil sendok yang "
    "ada di lemari lab, kue di dalam pantry dan piring yang ada di lemari pantry. Saya ingin turun "
    "dengan lift terdekat dari pantry";
constexpr std::string_view kLongPlan =
    R"({ "response": { "actions": [ { "command": "goto", "parameters": { "waypoint": "depan_lemari" } }, { "command": "goto", "parameters": { "waypoint": "ruang_pantry" } }, { "command": "goto", "parameters": { "waypoint": "lemari_pantry" } }, { "command": "goto", "parameters": { "waypoint": "lift_jauh" } } ] } })";

constexpr std::string_view kExploreCommand =
    "Tolong periksa seluruh area pantry, tunggu 10 detik, lalu berhenti.";
constexpr std::string_view kExplorePlan =
    R"({"response": {"actions": [{"command": "explore", "parameters": {"zone": "pantry"}}, {"command": "wait", "parameters": {"duration": 10}}, {"command": "halt", "parameters": {}}]}})";

constexpr std::string_view kOutputContract =
    "Reply with exactly one JSON object and nothing else: no prose, no markdown, no code fences. "
    "The object must have the shape {\"response\": {\"actions\": [ ... ]}} where every element "
    "is {\"command\": <goto|wait|explore|halt>, \"parameters\": {...}}. If the instruction cannot "
    "be served with the known waypoints, reply {\"response\": {\"actions\": []}}.";

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PromptError(path.string() + ": cannot open template file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string get_string(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw PromptError(where + ": field '" + key + "' must be a string");
    }
    return it->get<std::string>();
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw PromptError("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

void check_template(const PromptTemplate& tmpl, const WaypointWorld& world) {
    if (tmpl.preamble.empty()) throw PromptError("template: preamble is empty");
    if (tmpl.output_contract.find("\"response\"") == std::string::npos ||
        tmpl.output_contract.find("\"actions\"") == std::string::npos) {
        throw PromptError("template: output contract must demand the {\"response\": {\"actions\": [...]}} form");
    }
    for (const auto& doc : tmpl.primitive_docs) {
        if (doc.command != "goto" && doc.command != "wait" && doc.command != "explore" &&
            doc.command != "halt") {
            throw PromptError("template: primitive doc for unknown command '" + doc.command + "'");
        }
    }
    for (std::size_t i = 0; i < tmpl.few_shots.size(); ++i) {
        const auto& shot = tmpl.few_shots[i];
        const std::string where = "template: few-shot #" + std::to_string(i);
        if (canonicalize(shot.instruction).empty()) throw PromptError(where + ": empty instruction");
        auto parsed = parse_plan(shot.output);
        if (!parsed.ok()) {
            throw PromptError(where + ": output does not parse (" +
                              std::string(to_string(parsed.defects.front().kind)) + ": " +
                              parsed.defects.front().detail + ")");
        }
        auto validated = validate_plan(*parsed.plan, world);
        if (!validated.ok()) {
            throw PromptError(where + ": output does not validate (" +
                              std::string(to_string(validated.defects.front().kind)) + ": " +
                              validated.defects.front().detail + ")");
        }
    }
}

PromptTemplate default_template(const WaypointWorld& world) {
    PromptTemplate t;
    t.version = std::string(kTemplateVersion);
    t.preamble = std::string(kPreamble);
    t.primitive_docs = {
        {"goto", "walk to a named waypoint. parameters: {\"waypoint\": <waypoint name>}"},
        {"wait", "stand still for a number of seconds. parameters: {\"duration\": <seconds, >= 0>}"},
        {"explore",
         "visit every waypoint of a named zone, one after another. parameters: {\"zone\": <zone name>}"},
        {"halt", "stop immediately and end the mission. parameters: {}"},
    };
    t.constraint_rules = {
        "Use only waypoints from the list below; never invent, translate or abbreviate a waypoint name.",
        "Use only zone names from the zone list below for explore.",
        "Output JSON only, no prose.",
        "Preserve the user's stated visiting order, even when the sentence mentions the final "
        "destination first.",
        "Mention each place exactly as often as the user asks for it; do not add detours.",
        "If a requested place is not on the map, leave it out rather than guessing.",
    };
    t.few_shots = {
        {std::string(kSingleRoomCommand), std::string(kSingleRoomPlan)},
        {std::string(kMultiRoomCommand), std::string(kMultiRoomPlan)},
        {std::string(kLongCommand), std::string(kLongPlan)},
        {std::string(kExploreCommand), std::string(kExplorePlan)},
    };
    t.output_contract = std::string(kOutputContract);
    check_template(t, world);
    return t;
}

PromptTemplate parse_template(std::string_view text, const WaypointWorld& world, std::string_view origin) {
    const std::string where(origin);
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw PromptError(where + ": template is not a JSON object");
    }
    PromptTemplate t;
    t.version = get_string(doc, "version", where);
    t.preamble = get_string(doc, "preamble", where);
    t.output_contract = get_string(doc, "output_contract", where);

    auto docs = doc.find("primitive_docs");
    if (docs == doc.end() || !docs->is_array()) throw PromptError(where + ": primitive_docs must be an array");
    for (const auto& d : *docs) {
        if (!d.is_object()) throw PromptError(where + ": primitive_docs entries must be objects");
        t.primitive_docs.push_back({get_string(d, "command", where), get_string(d, "usage", where)});
    }
    auto rules = doc.find("constraint_rules");
    if (rules == doc.end() || !rules->is_array()) throw PromptError(where + ": constraint_rules must be an array");
    for (const auto& r : *rules) {
        if (!r.is_string()) throw PromptError(where + ": constraint_rules entries must be strings");
        t.constraint_rules.push_back(r.get<std::string>());
    }
    auto shots = doc.find("few_shots");
    if (shots == doc.end() || !shots->is_array()) throw PromptError(where + ": few_shots must be an array");
    for (const auto& s : *shots) {
        if (!s.is_object()) throw PromptError(where + ": few_shots entries must be objects");
        t.few_shots.push_back({get_string(s, "instruction", where), get_string(s, "output", where)});
    }
    try {
        check_template(t, world);
    } catch (const PromptError& e) {
        throw PromptError(where + ": " + e.what());
    }
    return t;
}

PromptTemplate load_template(const std::filesystem::path& path, const WaypointWorld& world) {
    return parse_template(read_file(path), world, path.string());
}

ordered_json to_json(const PromptTemplate& tmpl) {
    ordered_json j;
    j["version"] = tmpl.version;
    j["preamble"] = tmpl.preamble;
    j["primitive_docs"] = ordered_json::array();
    for (const auto& d : tmpl.primitive_docs) {
        j["primitive_docs"].push_back({{"command", d.command}, {"usage", d.usage}});
    }
    j["constraint_rules"] = tmpl.constraint_rules;
    j["few_shots"] = ordered_json::array();
    for (const auto& s : tmpl.few_shots) {
        j["few_shots"].push_back({{"instruction", s.instruction}, {"output", s.output}});
    }
    j["output_contract"] = tmpl.output_contract;
    return j;
}

PromptBundle build_prompt(const PromptTemplate& tmpl, const WaypointWorld& world,
                          std::string_view instruction) {
    if (canonicalize(instruction).empty()) throw PromptError("instruction is empty");

    std::string s;
    s += tmpl.preamble;
    s += "\n\nACTION PRIMITIVES\n";
    for (const auto& d : tmpl.primitive_docs) {
        s += "- " + d.command + ": " + d.usage + "\n";
    }
    s += "\nCONSTRAINTS\n";
    for (std::size_t i = 0; i < tmpl.constraint_rules.size(); ++i) {
        s += std::to_string(i + 1) + ". " + tmpl.constraint_rules[i] + "\n";
    }
    s += "\nKNOWN WAYPOINTS (name | display name | zone)\n";
    for (const auto& v : vocabulary(world)) {
        s += "- " + v.name + " | " + v.display_name + " | " + v.zone + "\n";
    }
    s += "\nKNOWN ZONES (name | display name)\n";
    for (const auto& [name, zone] : world.zones()) {
        s += "- " + name + " | " + zone.display_name + "\n";
    }
    s += "\nEXAMPLES\n";
    for (const auto& shot : tmpl.few_shots) {
        s += "[user]\n" + shot.instruction + "\n[assistant]\n" + shot.output + "\n\n";
    }
    s += "OUTPUT FORMAT\n" + tmpl.output_contract + "\n";

    PromptBundle bundle;
    bundle.template_hash = sha256_hex(s);
    bundle.system_text = std::move(s);
    bundle.user_text = std::string(instruction);
    return bundle;
}

}  // namespace quadplan
