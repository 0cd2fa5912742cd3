#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "quadplan/plan.hpp"
#include "quadplan/prompt.hpp"
#include "quadplan/provider.hpp"

namespace quadplan {

class WaypointWorld;

enum class GroundingStage { prompt, provider, parse, validate, done };

std::string_view to_string(GroundingStage stage);

/// Exactly one of `plan` / `defects` is populated. The raw model text, the
/// instruction and the template hash are always kept so a decision can be
/// replayed offline.
struct GroundingOutcome {
    std::string outcome_id;
    std::string timestamp;  // ISO-8601 UTC
    std::string instruction;
    std::string raw_output;
    std::vector<std::string> earlier_outputs;  // rejected outputs when re-prompting is on
    std::string template_hash;
    std::string provider_id;
    double provider_latency_s = 0.0;
    int provider_attempts = 0;
    std::optional<MovementPlan> plan;
    std::vector<PlanDefect> defects;
    GroundingStage stage = GroundingStage::prompt;  // `done` on success, else the failing stage
    std::optional<ProviderErrorKind> provider_error;

    bool ok() const { return plan.has_value(); }
};

nlohmann::ordered_json to_json(const GroundingOutcome& outcome);

/// Append-only, one JSON document per line. Safe for concurrent appenders.
class OutcomeLog {
public:
    explicit OutcomeLog(const std::filesystem::path& path);
    void append(const GroundingOutcome& outcome);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
    std::ofstream out_;
};

struct GroundingOptions {
    /// One extra provider call with a "previous output was invalid" addendum.
    bool reprompt_on_invalid = false;
};

class Grounder {
public:
    Grounder(std::shared_ptr<const WaypointWorld> world, std::shared_ptr<const PromptTemplate> tmpl,
             std::shared_ptr<Provider> provider, GroundingOptions options = {},
             std::shared_ptr<OutcomeLog> log = nullptr);

    /// Never throws for pipeline failures; they come back as defects. When
    /// `outcome_id` is unset a per-instance counter supplies one.
    GroundingOutcome ground(std::string_view instruction, std::optional<std::string> outcome_id = std::nullopt,
                            std::stop_token stop = {}) const;

    /// Provider deadline plus the local processing budget.
    double deadline_s() const;

    const WaypointWorld& world() const { return *world_; }
    std::shared_ptr<const WaypointWorld> shared_world() const { return world_; }
    const PromptTemplate& prompt_template() const { return *template_; }
    const Provider& provider() const { return *provider_; }

private:
    std::shared_ptr<const WaypointWorld> world_;
    std::shared_ptr<const PromptTemplate> template_;
    std::shared_ptr<Provider> provider_;
    GroundingOptions options_;
    std::shared_ptr<OutcomeLog> log_;
    mutable std::atomic<std::uint64_t> counter_{0};
};

inline constexpr double kGroundingProcessingBudgetS = 2.0;

}  // namespace quadplan
