#include "quadplan/grounding.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "quadplan/world.hpp"

namespace quadplan {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(GroundingStage stage) {
    switch (stage) {
        case GroundingStage::prompt: return "prompt";
        case GroundingStage::provider: return "provider";
        case GroundingStage::parse: return "parse";
        case GroundingStage::validate: return "validate";
        case GroundingStage::done: return "done";
    }
    return "unknown";
}

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

std::string reprompt_addendum(const std::vector<PlanDefect>& defects) {
    std::string s = "\n\n[Your previous output was invalid:";
    for (const auto& d : defects) {
        s += " " + std::string(to_string(d.kind)) + " at " + d.location() + " (" + d.detail + ")";
        if (d.suggestion) s += ", did you mean '" + *d.suggestion + "'?";
        s += ";";
    }
    s += " Reply again following the output format exactly.]";
    return s;
}

}  // namespace

ordered_json to_json(const GroundingOutcome& o) {
    ordered_json j;
    j["outcome_id"] = o.outcome_id;
    j["timestamp"] = o.timestamp;
    j["instruction"] = o.instruction;
    j["template_hash"] = o.template_hash;
    j["provider_id"] = o.provider_id;
    j["provider_latency_s"] = o.provider_latency_s;
    j["provider_attempts"] = o.provider_attempts;
    j["raw_output"] = o.raw_output;
    if (!o.earlier_outputs.empty()) j["earlier_outputs"] = o.earlier_outputs;
    j["stage"] = std::string(to_string(o.stage));
    if (o.plan) {
        j["plan_id"] = o.plan->plan_id;
        j["plan"] = ordered_json::parse(canonical_serialize(*o.plan));
    } else {
        ordered_json defects = ordered_json::array();
        for (const auto& d : o.defects) defects.push_back(to_json(d));
        j["defects"] = std::move(defects);
        if (o.provider_error) j["provider_error"] = std::string(to_string(*o.provider_error));
    }
    return j;
}

OutcomeLog::OutcomeLog(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app | std::ios::binary);
    if (!out_) throw std::runtime_error(path.string() + ": cannot open outcome log");
}

void OutcomeLog::append(const GroundingOutcome& outcome) {
    const std::string line = to_json(outcome).dump() + "\n";
    std::lock_guard lock(mutex_);
    out_ << line;
    out_.flush();
}

Grounder::Grounder(std::shared_ptr<const WaypointWorld> world, std::shared_ptr<const PromptTemplate> tmpl,
                   std::shared_ptr<Provider> provider, GroundingOptions options, std::shared_ptr<OutcomeLog> log)
    : world_(std::move(world)), template_(std::move(tmpl)), provider_(std::move(provider)),
      options_(options), log_(std::move(log)) {
    if (!world_ || !template_ || !provider_) throw std::invalid_argument("grounder: null dependency");
}

double Grounder::deadline_s() const {
    const int calls = options_.reprompt_on_invalid ? 2 : 1;
    return provider_->deadline_s() * calls + kGroundingProcessingBudgetS;
}

GroundingOutcome Grounder::ground(std::string_view instruction, std::optional<std::string> outcome_id,
                                  std::stop_token stop) const {
    GroundingOutcome out;
    if (outcome_id) {
        out.outcome_id = std::move(*outcome_id);
    } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "g-%06llu", static_cast<unsigned long long>(++counter_));
        out.outcome_id = buf;
    }
    out.timestamp = utc_timestamp();
    out.instruction = std::string(instruction);
    out.provider_id = provider_->id();

    auto finish = [&]() -> GroundingOutcome {
        if (log_) log_->append(out);
        return std::move(out);
    };

    PromptBundle bundle;
    try {
        bundle = build_prompt(*template_, *world_, instruction);
    } catch (const PromptError& e) {
        out.stage = GroundingStage::prompt;
        out.defects.push_back(PlanDefect{DefectKind::empty_instruction, std::nullopt, e.what(), std::nullopt});
        return finish();
    }
    out.template_hash = bundle.template_hash;

    const int max_calls = options_.reprompt_on_invalid ? 2 : 1;
    for (int call = 0; call < max_calls; ++call) {
        if (call > 0) {
            out.earlier_outputs.push_back(out.raw_output);
            bundle.user_text = std::string(instruction) + reprompt_addendum(out.defects);
            out.defects.clear();
        }
        out.stage = GroundingStage::provider;
        try {
            auto completion = provider_->complete(bundle, stop);
            out.raw_output = std::move(completion.text);
            out.provider_latency_s += completion.latency_s;
            out.provider_attempts += completion.attempts;
        } catch (const ProviderError& e) {
            out.provider_error = e.kind();
            out.provider_attempts += e.attempts();
            std::string detail = std::string(to_string(e.kind())) + ": " + e.what();
            if (!e.body_excerpt().empty()) detail += " | " + e.body_excerpt();
            out.defects.push_back(PlanDefect{DefectKind::provider_error, std::nullopt, std::move(detail), std::nullopt});
            return finish();
        }

        out.stage = GroundingStage::parse;
        auto parsed = parse_plan(out.raw_output);
        if (!parsed.ok()) {
            out.defects = std::move(parsed.defects);
            continue;
        }
        out.stage = GroundingStage::validate;
        auto validated = validate_plan(*parsed.plan, *world_);
        if (!validated.ok()) {
            out.defects = std::move(validated.defects);
            continue;
        }
        MovementPlan plan = std::move(*validated.plan);
        plan.source_text = std::string(instruction);
        plan.raw_model_output = out.raw_output;
        plan.plan_id = "plan-" + out.outcome_id;
        out.plan = std::move(plan);
        out.stage = GroundingStage::done;
        return finish();
    }
    return finish();
}

}  // namespace quadplan
