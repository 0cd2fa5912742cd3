#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "quadplan/grounding.hpp"
#include "quadplan/world.hpp"
#include "support/fixture.hpp"

using namespace quadplan;
using nlohmann::json;

namespace {

// Returns scripted texts in order (the last one repeats), or throws `error`.
class ScriptedProvider final : public Provider {
public:
    explicit ScriptedProvider(std::vector<std::string> texts) : texts_(std::move(texts)) {}
    explicit ScriptedProvider(ProviderError error) : error_(std::move(error)) {}

    CompletionResult complete(const PromptBundle& bundle, std::stop_token) override {
        std::lock_guard lock(mutex_);
        seen_.push_back(bundle.user_text);
        if (error_) throw *error_;
        CompletionResult r;
        r.text = texts_[std::min(calls_, texts_.size() - 1)];
        ++calls_;
        r.latency_s = 0.25;
        r.attempts = 1;
        r.provider_id = id();
        return r;
    }
    std::string id() const override { return "scripted"; }
    double deadline_s() const override { return 3.0; }

    std::vector<std::string> seen() {
        std::lock_guard lock(mutex_);
        return seen_;
    }

private:
    std::vector<std::string> texts_;
    std::optional<ProviderError> error_;
    std::mutex mutex_;
    std::size_t calls_ = 0;
    std::vector<std::string> seen_;
};

std::shared_ptr<const PromptTemplate> fixture_template() {
    static const auto t =
        std::make_shared<const PromptTemplate>(default_template(*testing_support::fixture_world()));
    return t;
}

Grounder make(std::shared_ptr<Provider> p, GroundingOptions opts = {}, std::shared_ptr<OutcomeLog> log = nullptr) {
    return Grounder(testing_support::fixture_world(), fixture_template(), std::move(p), opts, std::move(log));
}

const char* kGoodPlan = R"({"response":{"actions":[{"command":"goto","parameters":{"waypoint":"lift_jauh"}}]}})";
const char* kBadPlan = R"({"response":{"actions":[{"command":"goto","parameters":{"waypoint":"lift_jauhh"}}]}})";

}  // namespace

TEST_CASE("successful grounding keeps the decision record") {
    auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{kGoodPlan});
    const Grounder g = make(provider);
    const GroundingOutcome o = g.ground("ke lift jauh", std::string("t-1"));
    REQUIRE(o.ok());
    CHECK(o.defects.empty());
    CHECK(o.stage == GroundingStage::done);
    CHECK(o.outcome_id == "t-1");
    CHECK(o.plan->plan_id == "plan-t-1");
    CHECK(o.plan->source_text == "ke lift jauh");
    CHECK(o.plan->raw_model_output == kGoodPlan);
    CHECK(o.raw_output == kGoodPlan);
    CHECK(o.provider_id == "scripted");
    CHECK(o.provider_attempts == 1);
    CHECK(o.provider_latency_s == doctest::Approx(0.25));
    CHECK(o.template_hash == build_prompt(*fixture_template(), g.world(), "x").template_hash);
    CHECK(std::regex_match(o.timestamp, std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d\.\d{3}Z)")));
    CHECK(g.deadline_s() == doctest::Approx(3.0 + kGroundingProcessingBudgetS));
}

TEST_CASE("outcome ids default to a per-grounder counter") {
    const Grounder g = make(std::make_shared<ScriptedProvider>(std::vector<std::string>{kGoodPlan}));
    CHECK(g.ground("a").outcome_id == "g-000001");
    CHECK(g.ground("b").outcome_id == "g-000002");
}

TEST_CASE("invalid model output comes back as defects") {
    const Grounder g = make(std::make_shared<ScriptedProvider>(std::vector<std::string>{kBadPlan}));
    const GroundingOutcome o = g.ground("ke lift");
    CHECK_FALSE(o.ok());
    CHECK(o.stage == GroundingStage::validate);
    REQUIRE(o.defects.size() == 1);
    CHECK(o.defects[0].kind == DefectKind::unknown_waypoint);
    CHECK(o.defects[0].suggestion == "lift_jauh");
    CHECK(o.raw_output == kBadPlan);
}

TEST_CASE("prose output fails at the parse stage") {
    const Grounder g = make(std::make_shared<ScriptedProvider>(std::vector<std::string>{"Baik, saya berangkat."}));
    const GroundingOutcome o = g.ground("ke lift");
    CHECK(o.stage == GroundingStage::parse);
    REQUIRE(o.defects.size() == 1);
    CHECK(o.defects[0].kind == DefectKind::malformed_json);
}

TEST_CASE("blank instruction never reaches the provider") {
    auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{kGoodPlan});
    const Grounder g = make(provider);
    const GroundingOutcome o = g.ground("   ");
    CHECK(o.stage == GroundingStage::prompt);
    REQUIRE(o.defects.size() == 1);
    CHECK(o.defects[0].kind == DefectKind::empty_instruction);
    CHECK(provider->seen().empty());
}

TEST_CASE("provider failures are reported, not thrown") {
    auto provider = std::make_shared<ScriptedProvider>(
        ProviderError(ProviderErrorKind::http_status, "model service returned status 403", 1, 403, "forbidden"));
    const Grounder g = make(provider);
    GroundingOutcome o;
    CHECK_NOTHROW(o = g.ground("ke lift"));
    CHECK(o.stage == GroundingStage::provider);
    CHECK(o.provider_error == ProviderErrorKind::http_status);
    REQUIRE(o.defects.size() == 1);
    CHECK(o.defects[0].kind == DefectKind::provider_error);
    CHECK(o.defects[0].detail.find("forbidden") != std::string::npos);
    CHECK(to_json(o)["provider_error"] == "http_status");
}

TEST_CASE("re-prompting feeds the defects back once") {
    auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{kBadPlan, kGoodPlan});
    const Grounder g = make(provider, GroundingOptions{true});
    CHECK(g.deadline_s() == doctest::Approx(6.0 + kGroundingProcessingBudgetS));
    const GroundingOutcome o = g.ground("ke lift jauh");
    REQUIRE(o.ok());
    CHECK(o.earlier_outputs == std::vector<std::string>{kBadPlan});
    CHECK(o.provider_attempts == 2);
    const auto seen = provider->seen();
    REQUIRE(seen.size() == 2);
    CHECK(seen[0] == "ke lift jauh");
    CHECK(seen[1].find("previous output was invalid") != std::string::npos);
    CHECK(seen[1].find("lift_jauh") != std::string::npos);
}

TEST_CASE("re-prompting is off by default and bounded to one extra call") {
    auto once = std::make_shared<ScriptedProvider>(std::vector<std::string>{kBadPlan, kGoodPlan});
    CHECK_FALSE(make(once).ground("x").ok());
    CHECK(once->seen().size() == 1);

    auto twice = std::make_shared<ScriptedProvider>(std::vector<std::string>{kBadPlan});
    const GroundingOutcome o = make(twice, GroundingOptions{true}).ground("x");
    CHECK_FALSE(o.ok());
    CHECK(twice->seen().size() == 2);
}

TEST_CASE("outcome JSON carries plan or defects, never both") {
    const Grounder good = make(std::make_shared<ScriptedProvider>(std::vector<std::string>{kGoodPlan}));
    const auto j = to_json(good.ground("x", std::string("o1")));
    CHECK(j["plan"].dump() == R"({"actions":[{"command":"goto","parameters":{"waypoint":"lift_jauh"}}]})");
    CHECK(j["plan_id"] == "plan-o1");
    CHECK_FALSE(j.contains("defects"));
    CHECK(j["stage"] == "done");

    const Grounder bad = make(std::make_shared<ScriptedProvider>(std::vector<std::string>{kBadPlan}));
    const auto k = to_json(bad.ground("x"));
    CHECK_FALSE(k.contains("plan"));
    CHECK(k["defects"].size() == 1);
    CHECK(k["raw_output"] == kBadPlan);
}

TEST_CASE("outcome log is one JSON document per line under concurrency") {
    const auto path = std::filesystem::temp_directory_path() / "quadplan_test_outcomes.jsonl";
    std::filesystem::remove(path);
    auto log = std::make_shared<OutcomeLog>(path);
    const Grounder g = make(std::make_shared<ScriptedProvider>(std::vector<std::string>{kGoodPlan}), {}, log);

    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&g] {
            for (int i = 0; i < 25; ++i) g.ground("ke lift jauh");
        });
    }
    for (auto& t : threads) t.join();

    std::ifstream in(path);
    std::string line;
    std::set<std::string> ids;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        const json j = json::parse(line);
        ids.insert(j.at("outcome_id").get<std::string>());
        CHECK(j.at("instruction") == "ke lift jauh");
    }
    CHECK(lines == 100);
    CHECK(ids.size() == 100);
    std::filesystem::remove(path);
}

TEST_CASE("grounder refuses null dependencies") {
    CHECK_THROWS_AS(Grounder(nullptr, fixture_template(), std::make_shared<MockProvider>(testing_support::fixture_world())),
                    std::invalid_argument);
}
