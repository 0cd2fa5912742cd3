#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "quadplan/plan.hpp"
#include "quadplan/provider.hpp"
#include "quadplan/world.hpp"
#include "support/fixture.hpp"

using namespace quadplan;
using nlohmann::json;

namespace {

std::vector<std::string> waypoints_of(const std::string& model_text) {
    const PlanResult r = parse_plan(model_text);
    std::vector<std::string> out;
    if (!r.ok()) return out;
    for (const auto& a : r.plan->actions) {
        if (const auto* g = std::get_if<GotoAction>(&a)) out.push_back(g->waypoint);
        if (std::holds_alternative<HaltAction>(a)) out.push_back("<halt>");
    }
    return out;
}

std::string chat_reply(const std::string& content) {
    return json{{"choices", json::array({json{{"message", json{{"role", "assistant"}, {"content", content}}}}})}}
        .dump();
}

// Scripted chat endpoint on an ephemeral port. Each request pops the next
// (status, body) pair; the last pair repeats.
class ScriptedServer {
public:
    explicit ScriptedServer(std::vector<std::pair<int, std::string>> script, int delay_ms = 0)
        : script_(std::move(script)), delay_ms_(delay_ms) {
        server_.Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) {
            std::pair<int, std::string> step;
            {
                std::lock_guard lock(mutex_);
                requests_.push_back(req.body);
                auth_.push_back(req.get_header_value("Authorization"));
                step = script_[std::min(hits_, script_.size() - 1)];
                ++hits_;
            }
            if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
            res.status = step.first;
            res.set_content(step.second, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~ScriptedServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat"; }
    std::size_t hits() {
        std::lock_guard lock(mutex_);
        return hits_;
    }
    std::vector<std::string> requests() {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    std::vector<std::string> auth() {
        std::lock_guard lock(mutex_);
        return auth_;
    }

private:
    httplib::Server server_;
    std::vector<std::pair<int, std::string>> script_;
    int delay_ms_;
    std::mutex mutex_;
    std::size_t hits_ = 0;
    std::vector<std::string> requests_;
    std::vector<std::string> auth_;
    int port_ = 0;
    std::thread thread_;
};

ProviderConfig fast_config(const std::string& url) {
    ProviderConfig c;
    c.endpoint_url = url;
    c.model_name = "test-model";
    c.api_key = "secret";
    c.timeout_s = 2.0;
    c.max_retries = 2;
    c.backoff_base_s = 0.01;
    c.jitter_seed = 42;
    return c;
}

PromptBundle bundle() {
    PromptBundle b;
    b.system_text = "system";
    b.user_text = "ke lift jauh";
    b.template_hash = sha256_hex(b.system_text);
    return b;
}

ProviderError expect_error(Provider& p) {
    try {
        p.complete(bundle());
    } catch (const ProviderError& e) {
        return e;
    }
    FAIL("expected ProviderError");
    return ProviderError(ProviderErrorKind::transport, "", 0);
}

}  // namespace

TEST_CASE("mock grounding reproduces the reference plans") {
    const auto world = testing_support::fixture_world();
    CHECK(waypoints_of(mock_ground(*world, testing_support::kSingleRoom)) ==
          std::vector<std::string>{"depan_lemari", "depan_meja_solder"});
    CHECK(waypoints_of(mock_ground(*world, testing_support::kMultiRoomShort)) ==
          std::vector<std::string>{"depan_lemari", "depan_meja_solder", "depan_pintu_lab_903_luar"});
    CHECK(waypoints_of(mock_ground(*world, testing_support::kMultiRoomLong)) ==
          std::vector<std::string>{"depan_lemari", "ruang_pantry", "lemari_pantry", "lift_jauh"});
    CHECK(waypoints_of(mock_ground(*world, testing_support::kCrossZone)) ==
          std::vector<std::string>{"depan_meja_solder", "ruang_pantry", "toilet_pria"});
}

TEST_CASE("mock grounding resolves overlaps longest first and keeps sentence order") {
    const auto world = testing_support::fixture_world();
    // "lemari pantry" contains "pantry"; only the longer rule survives.
    CHECK(waypoints_of(mock_ground(*world, "ambil piring di lemari pantry")) ==
          std::vector<std::string>{"lemari_pantry"});
    CHECK(waypoints_of(mock_ground(*world, "ke toilet wanita lalu toilet")) ==
          std::vector<std::string>{"toilet_wanita", "toilet_pria"});
    CHECK(waypoints_of(mock_ground(*world, "Pergi ke LIFT DEKAT lalu STOP")) ==
          std::vector<std::string>{"lift_dekat", "<halt>"});
    CHECK(waypoints_of(mock_ground(*world, "901 lalu 904 lalu 901")) ==
          std::vector<std::string>{"depan_pintu_lab_901", "depan_pintu_lab_904", "depan_pintu_lab_901"});
}

TEST_CASE("mock grounding with nothing recognised yields an empty wrapped plan") {
    const auto world = testing_support::fixture_world();
    CHECK(mock_ground(*world, "tolong menari di lobi") == R"({"response":{"actions":[]}})");
}

TEST_CASE("mock rules naming absent waypoints are ignored") {
    const auto world = testing_support::fixture_world();
    KeywordTable table = {{"atap", "rooftop"}, {"lift", "lift_dekat"}};
    CHECK(waypoints_of(mock_ground(*world, "ke atap lewat lift", table)) == std::vector<std::string>{"lift_dekat"});
}

TEST_CASE("keyword table file matches the built-in table") {
    const KeywordTable loaded = load_keyword_table(testing_support::data_dir() / "mock_keywords.json");
    CHECK(to_json(loaded) == to_json(default_keyword_table()));
}

TEST_CASE("malformed keyword tables are rejected") {
    const auto path = std::filesystem::temp_directory_path() / "quadplan_bad_keywords.json";
    {
        std::ofstream(path) << R"({"rules":[{"pattern":"x","action":"jump"}]})";
    }
    CHECK_THROWS(load_keyword_table(path));
    {
        std::ofstream(path) << R"([1,2])";
    }
    CHECK_THROWS(load_keyword_table(path));
    std::filesystem::remove(path);
    CHECK_THROWS(load_keyword_table(path));
}

TEST_CASE("mock provider echoes the user text through the keyword table") {
    MockProvider p(testing_support::fixture_world());
    const CompletionResult r = p.complete(bundle());
    CHECK(r.provider_id == "mock");
    CHECK(r.attempts == 1);
    CHECK(waypoints_of(r.text) == std::vector<std::string>{"lift_jauh"});
}

TEST_CASE("chat request body") {
    ProviderConfig c;
    c.model_name = "m";
    c.temperature = 0.0;
    const json body = chat_request_body(c, bundle());
    CHECK(body["model"] == "m");
    CHECK(body["temperature"] == 0.0);
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][0]["content"] == "system");
    CHECK(body["messages"][1]["role"] == "user");
    CHECK(body["messages"][1]["content"] == "ke lift jauh");
}

TEST_CASE("assistant text extraction") {
    CHECK(extract_completion_text(json::parse(chat_reply("hi"))) == std::string("hi"));
    CHECK(extract_completion_text(json::parse(R"({"message":{"content":"ollama"}})")) == std::string("ollama"));
    CHECK(extract_completion_text(json::parse(R"({"candidates":[{"content":{"parts":[{"text":"g"}]}}]})")) ==
          std::string("g"));
    CHECK_FALSE(extract_completion_text(json::parse(R"({"choices":[]})")).has_value());
    CHECK_FALSE(extract_completion_text(json::parse(R"({"choices":[{"message":{"content":7}}]})")).has_value());
}

TEST_CASE("provider config validation") {
    ProviderConfig c;
    CHECK_NOTHROW(c.validate());
    c.timeout_s = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ProviderConfig{};
    c.max_retries = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ProviderConfig{};
    c.temperature = -0.1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_THROWS_AS(HttpChatProvider(ProviderConfig{}), std::invalid_argument);

    const ProviderConfig parsed = ProviderConfig::from_json(
        json{{"endpoint_url", "http://h/x"}, {"model_name", "m"}, {"max_retries", 0}, {"api_key", "k"}});
    CHECK(parsed.max_retries == 0);
    CHECK(parsed.api_key == "k");
    CHECK_THROWS(ProviderConfig::from_json(json{{"timeout_s", -1}}));
}

TEST_CASE("http provider returns the assistant text verbatim") {
    ScriptedServer server({{200, chat_reply(R"({"response":{"actions":[]}})")}});
    HttpChatProvider p(fast_config(server.url()));
    const CompletionResult r = p.complete(bundle());
    CHECK(r.text == R"({"response":{"actions":[]}})");
    CHECK(r.attempts == 1);
    CHECK(r.provider_id == "http:test-model");
    REQUIRE(server.requests().size() == 1);
    const json sent = json::parse(server.requests()[0]);
    CHECK(sent["model"] == "test-model");
    CHECK(sent["messages"][1]["content"] == "ke lift jauh");
    CHECK(server.auth()[0] == "Bearer secret");
}

TEST_CASE("http provider retries transient statuses") {
    ScriptedServer server({{429, "slow down"}, {503, "busy"}, {200, chat_reply("ok")}});
    HttpChatProvider p(fast_config(server.url()));
    const CompletionResult r = p.complete(bundle());
    CHECK(r.text == "ok");
    CHECK(r.attempts == 3);
    CHECK(server.hits() == 3);
}

TEST_CASE("http provider gives up after the retry budget") {
    ScriptedServer server({{500, "down"}});
    HttpChatProvider p(fast_config(server.url()));
    const ProviderError e = expect_error(p);
    CHECK(e.kind() == ProviderErrorKind::retries_exhausted);
    CHECK(e.attempts() == 3);
    CHECK(e.unavailable());
    CHECK(server.hits() == 3);
}

TEST_CASE("http provider does not retry a refusal") {
    ScriptedServer server({{401, R"({"error":"bad key"})"}});
    HttpChatProvider p(fast_config(server.url()));
    const ProviderError e = expect_error(p);
    CHECK(e.kind() == ProviderErrorKind::http_status);
    CHECK(e.status() == 401);
    CHECK(e.body_excerpt().find("bad key") != std::string::npos);
    CHECK_FALSE(e.unavailable());
    CHECK(server.hits() == 1);
}

TEST_CASE("http provider reports a body without assistant text") {
    ScriptedServer server({{200, R"({"choices":[]})"}});
    HttpChatProvider p(fast_config(server.url()));
    const ProviderError e = expect_error(p);
    CHECK(e.kind() == ProviderErrorKind::bad_response);
    CHECK(server.hits() == 1);
}

TEST_CASE("http provider times out on a silent endpoint") {
    ScriptedServer server({{200, chat_reply("late")}}, 1500);
    ProviderConfig c = fast_config(server.url());
    c.timeout_s = 0.3;
    c.max_retries = 0;
    HttpChatProvider p(c);
    const auto started = std::chrono::steady_clock::now();
    const ProviderError e = expect_error(p);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    CHECK(e.kind() == ProviderErrorKind::timeout);
    CHECK(elapsed < 1.2);
    CHECK(p.deadline_s() == doctest::Approx(0.3));
}

TEST_CASE("http provider reports an unreachable endpoint as transport failure") {
    // Bind an ephemeral port without listening, then release it.
    int port = 0;
    {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd >= 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
        socklen_t len = sizeof addr;
        REQUIRE(::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
        port = ntohs(addr.sin_port);
        ::close(fd);
    }
    ProviderConfig c = fast_config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat");
    c.max_retries = 0;
    HttpChatProvider p(c);
    const ProviderError e = expect_error(p);
    CHECK(e.kind() == ProviderErrorKind::transport);
    CHECK(e.unavailable());
}

TEST_CASE("http provider honours cancellation between attempts") {
    ScriptedServer server({{503, "busy"}});
    ProviderConfig c = fast_config(server.url());
    c.backoff_base_s = 5.0;
    HttpChatProvider p(c);
    std::stop_source stop;
    std::thread canceller([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        stop.request_stop();
    });
    const auto started = std::chrono::steady_clock::now();
    try {
        p.complete(bundle(), stop.get_token());
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK(e.kind() == ProviderErrorKind::cancelled);
    }
    canceller.join();
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() < 2.0);
}
