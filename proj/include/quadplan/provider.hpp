#pragma once

// Model provider boundary. HttpChatProvider speaks a minimal chat-completion
// contract:
//
//   POST <endpoint_url>
//   {"model": ..., "messages": [{"role": "system", "content": ...},
//                               {"role": "user", "content": ...}],
//    "temperature": 0}
//
// and reads the assistant text from choices[0].message.content (with two
// fallbacks, see extract_completion_text). MockProvider grounds with a keyword
// table so everything runs offline.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "quadplan/prompt.hpp"

namespace quadplan {

class WaypointWorld;

inline constexpr std::string_view kApiKeyEnv = "QUADPLAN_API_KEY";

struct ProviderConfig {
    std::string endpoint_url;
    std::string api_key;
    std::string model_name;
    double timeout_s = 30.0;
    int max_retries = 2;
    double temperature = 0.0;
    double backoff_base_s = 1.0;
    double backoff_factor = 2.0;
    std::optional<std::uint64_t> jitter_seed;  // unset: seeded from std::random_device

    /// Throws std::invalid_argument on timeout <= 0, max_retries < 0 or temperature < 0.
    void validate() const;

    /// Reads the provider section of a service config. api_key is taken from the
    /// environment (kApiKeyEnv) unless the section sets it explicitly.
    static ProviderConfig from_json(const nlohmann::json& section);
};

struct CompletionResult {
    std::string text;
    double latency_s = 0.0;
    int attempts = 0;
    std::string provider_id;
};

enum class ProviderErrorKind {
    timeout,
    transport,
    http_status,        // non-retryable status: the model service refused
    bad_response,       // 2xx but no assistant text in the body
    retries_exhausted,  // transient failures used up the retry budget
    cancelled,
};

std::string_view to_string(ProviderErrorKind kind);

class ProviderError : public std::runtime_error {
public:
    ProviderError(ProviderErrorKind kind, std::string message, int attempts, int status = 0,
                  std::string body_excerpt = {})
        : std::runtime_error(std::move(message)), kind_(kind), attempts_(attempts), status_(status),
          body_excerpt_(std::move(body_excerpt)) {}

    ProviderErrorKind kind() const { return kind_; }
    int attempts() const { return attempts_; }
    int status() const { return status_; }
    const std::string& body_excerpt() const { return body_excerpt_; }

    /// True for failures that mean "model unavailable" rather than "model refused".
    bool unavailable() const { return kind_ != ProviderErrorKind::http_status; }

private:
    ProviderErrorKind kind_;
    int attempts_;
    int status_;
    std::string body_excerpt_;
};

class Provider {
public:
    virtual ~Provider() = default;
    /// Raw model text, verbatim. Throws ProviderError.
    virtual CompletionResult complete(const PromptBundle& bundle, std::stop_token stop = {}) = 0;
    virtual std::string id() const = 0;
    /// Upper bound on one complete() call, in seconds.
    virtual double deadline_s() const = 0;
};

class HttpChatProvider final : public Provider {
public:
    explicit HttpChatProvider(ProviderConfig config);

    CompletionResult complete(const PromptBundle& bundle, std::stop_token stop = {}) override;
    std::string id() const override;
    double deadline_s() const override;

    const ProviderConfig& config() const { return config_; }

private:
    ProviderConfig config_;
};

nlohmann::json chat_request_body(const ProviderConfig& config, const PromptBundle& bundle);

/// choices[0].message.content, else message.content, else
/// candidates[0].content.parts[0].text.
std::optional<std::string> extract_completion_text(const nlohmann::json& body);

struct KeywordRule {
    std::string pattern;   // lowercase substring of the instruction
    std::string waypoint;  // target waypoint; empty means halt
};

using KeywordTable = std::vector<KeywordRule>;

const KeywordTable& default_keyword_table();
KeywordTable load_keyword_table(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const KeywordTable& table);

/// Keyword grounding: every rule occurrence in the lowercased instruction is
/// a candidate, overlaps are resolved longest-first, survivors become goto
/// (or halt) actions in order of position. Rules naming waypoints absent from
/// `world` are ignored. Output is the wrapped JSON form.
std::string mock_ground(const WaypointWorld& world, std::string_view instruction,
                        const KeywordTable& table = default_keyword_table());

class MockProvider final : public Provider {
public:
    MockProvider(std::shared_ptr<const WaypointWorld> world, KeywordTable table = default_keyword_table());

    CompletionResult complete(const PromptBundle& bundle, std::stop_token stop = {}) override;
    std::string id() const override { return "mock"; }
    double deadline_s() const override { return 1.0; }

private:
    std::shared_ptr<const WaypointWorld> world_;
    KeywordTable table_;
};

}  // namespace quadplan
