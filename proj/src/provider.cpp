#include "quadplan/provider.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>

#include "httplib.h"
#include "quadplan/plan.hpp"
#include "quadplan/world.hpp"

namespace quadplan {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string_view to_string(ProviderErrorKind kind) {
    switch (kind) {
        case ProviderErrorKind::timeout: return "timeout";
        case ProviderErrorKind::transport: return "transport";
        case ProviderErrorKind::http_status: return "http_status";
        case ProviderErrorKind::bad_response: return "bad_response";
        case ProviderErrorKind::retries_exhausted: return "retries_exhausted";
        case ProviderErrorKind::cancelled: return "cancelled";
    }
    return "unknown";
}

void ProviderConfig::validate() const {
    if (!(timeout_s > 0.0)) throw std::invalid_argument("provider: timeout must be > 0");
    if (max_retries < 0) throw std::invalid_argument("provider: max_retries must be >= 0");
    if (!(temperature >= 0.0)) throw std::invalid_argument("provider: temperature must be >= 0");
    if (!(backoff_base_s >= 0.0) || !(backoff_factor >= 1.0)) {
        throw std::invalid_argument("provider: backoff base must be >= 0 and factor >= 1");
    }
}

ProviderConfig ProviderConfig::from_json(const json& section) {
    ProviderConfig c;
    c.endpoint_url = section.value("endpoint_url", std::string{});
    c.model_name = section.value("model_name", std::string{});
    c.timeout_s = section.value("timeout_s", c.timeout_s);
    c.max_retries = section.value("max_retries", c.max_retries);
    c.temperature = section.value("temperature", c.temperature);
    c.backoff_base_s = section.value("backoff_base_s", c.backoff_base_s);
    c.backoff_factor = section.value("backoff_factor", c.backoff_factor);
    if (section.contains("jitter_seed")) c.jitter_seed = section.at("jitter_seed").get<std::uint64_t>();
    if (section.contains("api_key")) {
        c.api_key = section.at("api_key").get<std::string>();
    } else if (const char* env = std::getenv(std::string(kApiKeyEnv).c_str())) {
        c.api_key = env;
    }
    c.validate();
    return c;
}

json chat_request_body(const ProviderConfig& config, const PromptBundle& bundle) {
    json body;
    body["model"] = config.model_name;
    body["messages"] = json::array({
        json{{"role", "system"}, {"content", bundle.system_text}},
        json{{"role", "user"}, {"content", bundle.user_text}},
    });
    body["temperature"] = config.temperature;
    return body;
}

std::optional<std::string> extract_completion_text(const json& body) {
    const json::json_pointer paths[] = {
        json::json_pointer("/choices/0/message/content"),
        json::json_pointer("/message/content"),
        json::json_pointer("/candidates/0/content/parts/0/text"),
    };
    for (const auto& p : paths) {
        if (body.contains(p) && body.at(p).is_string()) return body.at(p).get<std::string>();
    }
    return std::nullopt;
}

namespace {

struct Endpoint {
    std::string scheme_host_port;
    std::string path;
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("provider: endpoint_url must include a scheme: " + url);
    }
    const auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) return {url, "/"};
    return {url.substr(0, path_begin), url.substr(path_begin)};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

std::string excerpt(const std::string& body) {
    constexpr std::size_t kMax = 512;
    return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

// Sleeps up to `d`; returns false when stopped early.
bool interruptible_sleep(Clock::duration d, std::stop_token stop) {
    std::mutex m;
    std::condition_variable_any cv;
    std::unique_lock lock(m);
    return !cv.wait_for(lock, stop, d, [] { return false; }) && !stop.stop_requested();
}

}  // namespace

HttpChatProvider::HttpChatProvider(ProviderConfig config) : config_(std::move(config)) {
    config_.validate();
    split_url(config_.endpoint_url);
}

std::string HttpChatProvider::id() const {
    return "http:" + (config_.model_name.empty() ? std::string("default") : config_.model_name);
}

double HttpChatProvider::deadline_s() const { return config_.timeout_s * (config_.max_retries + 1); }

CompletionResult HttpChatProvider::complete(const PromptBundle& bundle, std::stop_token stop) {
    const auto started = Clock::now();
    const auto deadline = started + std::chrono::duration_cast<Clock::duration>(
                                        std::chrono::duration<double>(deadline_s()));
    const Endpoint ep = split_url(config_.endpoint_url);
    const std::string body = chat_request_body(config_, bundle).dump();

    std::mt19937_64 rng(config_.jitter_seed ? *config_.jitter_seed : std::random_device{}());
    const int max_attempts = config_.max_retries + 1;

    ProviderErrorKind last_kind = ProviderErrorKind::transport;
    std::string last_message;
    int attempts = 0;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        if (stop.stop_requested()) {
            throw ProviderError(ProviderErrorKind::cancelled, "provider call cancelled", attempts);
        }
        const auto remaining = std::chrono::duration<double>(deadline - Clock::now()).count();
        if (remaining <= 0.0) break;
        const double attempt_timeout = std::min(config_.timeout_s, remaining);
        const auto secs = static_cast<time_t>(attempt_timeout);
        const auto usecs = static_cast<time_t>((attempt_timeout - static_cast<double>(secs)) * 1e6);

        httplib::Client client(ep.scheme_host_port);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

        ++attempts;
        const auto sent = std::chrono::steady_clock::now();
        auto res = client.Post(ep.path, headers, body, "application/json");
        if (!res) {
            const auto err = res.error();
            // httplib also reports a refused connection as Read, so a Read
            // error only counts as a timeout once the attempt used its budget.
            const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - sent).count();
            const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                                   (err == httplib::Error::Read && waited >= 0.9 * attempt_timeout);
            last_kind = timed_out ? ProviderErrorKind::timeout : ProviderErrorKind::transport;
            last_message = "request failed: " + httplib::to_string(err);
        } else if (res->status >= 200 && res->status < 300) {
            json parsed = json::parse(res->body, nullptr, false);
            auto text = parsed.is_discarded() ? std::nullopt : extract_completion_text(parsed);
            if (!text) {
                throw ProviderError(ProviderErrorKind::bad_response,
                                    "response carries no assistant text", attempts, res->status,
                                    excerpt(res->body));
            }
            CompletionResult out;
            out.text = std::move(*text);
            out.latency_s = std::chrono::duration<double>(Clock::now() - started).count();
            out.attempts = attempts;
            out.provider_id = id();
            return out;
        } else if (!retryable_status(res->status)) {
            throw ProviderError(ProviderErrorKind::http_status,
                                "model service returned status " + std::to_string(res->status),
                                attempts, res->status, excerpt(res->body));
        } else {
            last_kind = ProviderErrorKind::transport;
            last_message = "model service returned status " + std::to_string(res->status);
        }

        if (attempt + 1 < max_attempts) {
            // Equal jitter: half the exponential delay fixed, half uniform.
            const double full = config_.backoff_base_s * std::pow(config_.backoff_factor, attempt);
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            const double delay = std::min(full * (0.5 + 0.5 * u),
                                          std::chrono::duration<double>(deadline - Clock::now()).count());
            if (delay > 0.0 &&
                !interruptible_sleep(std::chrono::duration_cast<Clock::duration>(
                                         std::chrono::duration<double>(delay)),
                                     stop)) {
                throw ProviderError(ProviderErrorKind::cancelled, "provider call cancelled", attempts);
            }
        }
    }
    if (config_.max_retries == 0 && attempts == 1) {
        throw ProviderError(last_kind, last_message, attempts);
    }
    throw ProviderError(ProviderErrorKind::retries_exhausted,
                        "retry budget exhausted after " + std::to_string(attempts) +
                            " attempts; last failure: " + last_message,
                        attempts);
}

// ---------------------------------------------------------------------------
// Keyword mock

const KeywordTable& default_keyword_table() {
    static const KeywordTable kTable = {
        {"lemari lab", "depan_lemari"},
        {"lemari pantry", "lemari_pantry"},
        {"solder", "depan_meja_solder"},
        {"nyolder", "depan_meja_solder"},  // menyolder: to solder
        {"meja assembly", "depan_meja_assembly"},
        {"meja rakit", "depan_meja_assembly"},
        {"903", "depan_pintu_lab_903_luar"},
        {"902", "depan_pintu_lab_902"},
        {"904", "depan_pintu_lab_904"},
        {"901", "depan_pintu_lab_901"},
        {"pantry", "ruang_pantry"},
        {"ruang keamanan", "ruang_keamanan"},
        {"satpam", "ruang_keamanan"},
        // The far lift is the one next to the pantry.
        {"lift terdekat dari pantry", "lift_jauh"},
        {"lift jauh", "lift_jauh"},
        {"lift dekat", "lift_dekat"},
        {"lift terdekat dari lab", "lift_dekat"},
        {"toilet wanita", "toilet_wanita"},
        {"toilet pria", "toilet_pria"},
        {"toilet", "toilet_pria"},
        {"posisi awal", "robot_home"},
        {"berhenti", ""},
        {"stop", ""},
    };
    return kTable;
}

KeywordTable load_keyword_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": cannot open keyword table");
    std::ostringstream buf;
    buf << in.rdbuf();
    json doc = json::parse(buf.str(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array()) {
        throw std::runtime_error(path.string() + ": keyword table must be {\"rules\": [...]}");
    }
    KeywordTable table;
    for (const auto& r : doc["rules"]) {
        KeywordRule rule;
        rule.pattern = r.at("pattern").get<std::string>();
        const std::string action = r.value("action", std::string("goto"));
        if (action == "goto") {
            rule.waypoint = r.at("waypoint").get<std::string>();
        } else if (action != "halt") {
            throw std::runtime_error(path.string() + ": unknown keyword action '" + action + "'");
        }
        if (rule.pattern.empty()) throw std::runtime_error(path.string() + ": empty keyword pattern");
        table.push_back(std::move(rule));
    }
    return table;
}

ordered_json to_json(const KeywordTable& table) {
    ordered_json rules = ordered_json::array();
    for (const auto& r : table) {
        ordered_json j;
        j["pattern"] = r.pattern;
        if (r.waypoint.empty()) {
            j["action"] = "halt";
        } else {
            j["action"] = "goto";
            j["waypoint"] = r.waypoint;
        }
        rules.push_back(std::move(j));
    }
    ordered_json doc;
    doc["rules"] = std::move(rules);
    return doc;
}

std::string mock_ground(const WaypointWorld& world, std::string_view instruction, const KeywordTable& table) {
    std::string text(instruction);
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) {
        return static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c);
    });

    struct Match {
        std::size_t pos;
        std::size_t len;
        std::size_t rule;
    };
    std::vector<Match> matches;
    for (std::size_t r = 0; r < table.size(); ++r) {
        const auto& rule = table[r];
        if (!rule.waypoint.empty() && world.find_waypoint(rule.waypoint) == nullptr) continue;
        for (auto pos = text.find(rule.pattern); pos != std::string::npos;
             pos = text.find(rule.pattern, pos + 1)) {
            matches.push_back({pos, rule.pattern.size(), r});
        }
    }
    std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
        if (a.len != b.len) return a.len > b.len;
        if (a.pos != b.pos) return a.pos < b.pos;
        return a.rule < b.rule;
    });
    std::vector<Match> kept;
    for (const auto& m : matches) {
        const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Match& k) {
            return m.pos < k.pos + k.len && k.pos < m.pos + m.len;
        });
        if (!overlaps) kept.push_back(m);
    }
    std::sort(kept.begin(), kept.end(), [](const Match& a, const Match& b) { return a.pos < b.pos; });

    std::vector<ActionCommand> actions;
    for (const auto& m : kept) {
        const auto& rule = table[m.rule];
        if (rule.waypoint.empty()) {
            actions.emplace_back(HaltAction{});
        } else {
            actions.emplace_back(GotoAction{rule.waypoint});
        }
    }
    ordered_json inner;
    inner["actions"] = actions_to_json(actions);
    ordered_json doc;
    doc["response"] = std::move(inner);
    return doc.dump();
}

MockProvider::MockProvider(std::shared_ptr<const WaypointWorld> world, KeywordTable table)
    : world_(std::move(world)), table_(std::move(table)) {}

CompletionResult MockProvider::complete(const PromptBundle& bundle, std::stop_token stop) {
    if (stop.stop_requested()) throw ProviderError(ProviderErrorKind::cancelled, "provider call cancelled", 0);
    CompletionResult out;
    out.text = mock_ground(*world_, bundle.user_text, table_);
    out.latency_s = 0.0;
    out.attempts = 1;
    out.provider_id = id();
    return out;
}

}  // namespace quadplan
