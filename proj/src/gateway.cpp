#include "quadplan/gateway.hpp"

#include <chrono>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "httplib.h"
#include "quadplan/names.hpp"
#include "quadplan/prompt.hpp"

namespace quadplan {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kJson = "application/json";

std::filesystem::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path;
}

template <typename T>
T field(const json& j, const char* key, const T& fallback, const char* section) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: ") + section + "." + key + " has the wrong type");
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* section) {
    std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(std::string("config: unknown key '") + section + "." + key + "'");
    }
}

void send_json(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, std::string_view kind, std::string_view detail,
                ordered_json extra = ordered_json::object()) {
    ordered_json body;
    body["error_kind"] = kind;
    body["detail"] = detail;
    for (auto& [k, v] : extra.items()) body[k] = v;
    send_json(res, status, body);
}

std::string sse_frame(std::size_t id, const MissionFeed::Frame& frame) {
    return "id: " + std::to_string(id) + "\nevent: " + frame.event + "\ndata: " + frame.data + "\n\n";
}

ordered_json plan_body(const MovementPlan& plan) { return ordered_json::parse(canonical_serialize(plan)); }

}  // namespace

// ---------------------------------------------------------------------------

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown(j,
                   {"listen", "provider", "map", "template", "sim", "recovery_policy", "faults", "logs",
                    "heartbeat_s", "reprompt_on_invalid", "threads"},
                   "");
    ServiceConfig c;
    if (j.contains("listen")) {
        const json& l = j.at("listen");
        reject_unknown(l, {"host", "port"}, "listen");
        c.host = field(l, "host", c.host, "listen");
        c.port = field(l, "port", c.port, "listen");
    }
    if (!j.contains("map")) throw ConfigError("config: 'map' is required");
    c.map_path = resolve(base_dir, field<std::string>(j, "map", "", ""));
    if (j.contains("template")) c.template_path = resolve(base_dir, field<std::string>(j, "template", "", ""));

    if (j.contains("provider")) {
        const json& p = j.at("provider");
        if (!p.is_object()) throw ConfigError("config: provider must be an object");
        c.mock = field(p, "mock", false, "provider");
        if (p.contains("keywords")) c.keywords = resolve(base_dir, field<std::string>(p, "keywords", "", "provider"));
        if (!c.mock) {
            json section = p;
            section.erase("mock");
            section.erase("keywords");
            try {
                c.provider = ProviderConfig::from_json(section);
            } catch (const std::exception& e) {
                throw ConfigError(std::string("config: provider: ") + e.what());
            }
        }
    }
    if (j.contains("sim")) {
        const json& s = j.at("sim");
        reject_unknown(s, {"cruise_speed", "tick_s", "pace", "seed"}, "sim");
        c.sim.cruise_speed = field(s, "cruise_speed", c.sim.cruise_speed, "sim");
        c.sim.tick_s = field(s, "tick_s", c.sim.tick_s, "sim");
        c.pace = field(s, "pace", c.pace, "sim");
        c.seed = field(s, "seed", c.seed, "sim");
    }
    if (j.contains("recovery_policy")) {
        const auto policy = recovery_policy_from_string(field<std::string>(j, "recovery_policy", "", ""));
        if (!policy) throw ConfigError("config: unknown recovery_policy");
        c.policy = *policy;
    }
    if (j.contains("faults")) {
        if (!j.at("faults").is_array()) throw ConfigError("config: faults must be an array");
        for (const auto& f : j.at("faults")) {
            try {
                c.faults.push_back(fault_from_json(f));
            } catch (const std::exception& e) {
                throw ConfigError(std::string("config: faults: ") + e.what());
            }
        }
    }
    if (j.contains("logs")) {
        const json& l = j.at("logs");
        reject_unknown(l, {"outcomes", "missions"}, "logs");
        if (l.contains("outcomes")) c.outcome_log = resolve(base_dir, field<std::string>(l, "outcomes", "", "logs"));
        if (l.contains("missions")) c.mission_log = resolve(base_dir, field<std::string>(l, "missions", "", "logs"));
    }
    c.heartbeat_s = field(j, "heartbeat_s", c.heartbeat_s, "");
    c.reprompt_on_invalid = field(j, "reprompt_on_invalid", c.reprompt_on_invalid, "");
    c.threads = field(j, "threads", c.threads, "");
    return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
    return from_json(j, path.parent_path());
}

void ServiceConfig::validate() const {
    if (port < 0 || port > 65535) throw ConfigError("config: port out of range");
    if (host.empty()) throw ConfigError("config: host is empty");
    auto must_exist = [](const fs::path& p, const char* what) {
        if (!fs::is_regular_file(p)) throw ConfigError(std::string("config: ") + what + " not found: " + p.string());
    };
    must_exist(map_path, "map");
    if (template_path) must_exist(*template_path, "template");
    if (keywords) must_exist(*keywords, "keyword table");
    if (!mock) {
        if (!provider) throw ConfigError("config: provider section required unless mock is set");
        if (provider->endpoint_url.empty()) throw ConfigError("config: provider.endpoint_url is required");
        if (provider->model_name.empty()) throw ConfigError("config: provider.model_name is required");
        try {
            provider->validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    if (!(sim.cruise_speed > 0.0)) throw ConfigError("config: sim.cruise_speed must be positive");
    if (!(sim.tick_s > 0.0)) throw ConfigError("config: sim.tick_s must be positive");
    if (pace < 0.0) throw ConfigError("config: sim.pace must be >= 0");
    if (!(heartbeat_s > 0.0) || heartbeat_s > 10.0) throw ConfigError("config: heartbeat_s must be in (0, 10]");
    if (threads < 2) throw ConfigError("config: threads must be >= 2");
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<const WaypointWorld> world, std::shared_ptr<const Grounder> grounder,
                 ExecutorConfig executor_config, GatewayOptions options)
    : world_(std::move(world)),
      grounder_(std::move(grounder)),
      executor_(world_, std::move(executor_config)),
      options_(std::move(options)),
      server_(std::make_unique<httplib::Server>()) {
    const int threads = options_.threads;
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    install_routes();
}

Gateway::~Gateway() { stop(); }

int Gateway::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (!server_->bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    listener_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Gateway::run(const std::string& host, int port) {
    if (!server_->listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void Gateway::stop() {
    if (stopping_.exchange(true)) return;
    server_->stop();
    if (listener_.joinable()) listener_.join();
    join_groundings();
}

void Gateway::join_groundings() {
    std::vector<Abandoned> pending;
    {
        std::lock_guard lock(groundings_mutex_);
        pending.swap(abandoned_);
    }
    for (auto& a : pending) a.thread.request_stop();
    pending.clear();  // jthread joins
}

void Gateway::install_routes() {
    httplib::Server& svr = *server_;

    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    svr.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
        res.status = 204;
    });
    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string detail = "unknown error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            detail = e.what();
        } catch (...) {
        }
        send_error(res, 500, "internal", detail);
    });
    svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 404) {
            send_error(res, 404, "not_found", "no route for " + req.method + " " + req.path);
        } else {
            send_error(res, res.status, "http_error", httplib::status_message(res.status));
        }
    });

    svr.Get("/v1/healthz", [this](const httplib::Request&, httplib::Response& res) {
        ordered_json body;
        body["status"] = "ok";
        body["version"] = kVersion;
        body["provider"] = grounder_->provider().id();
        body["map"] = world_->name();
        body["busy"] = executor_.busy();
        send_json(res, 200, body);
    });

    svr.Get("/v1/map", [this](const httplib::Request&, httplib::Response& res) {
        res.status = 200;
        res.set_content(world_->source_document().dump(), kJson);
    });

    svr.Get("/v1/metrics", [this](const httplib::Request& req, httplib::Response& res) {
        std::vector<MissionRecord> records;
        if (options_.metrics_log) {
            records = MissionLog::read(*options_.metrics_log);
        } else {
            records = executor_.records();
        }
        const auto rows = summarize(records);
        const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
        if (format == "csv") {
            res.status = 200;
            res.set_content(summary_csv(rows), "text/csv");
            return;
        }
        if (format != "json") {
            send_error(res, 400, "bad_request", "format must be json or csv");
            return;
        }
        ordered_json body;
        body["records"] = records.size();
        ordered_json list = ordered_json::array();
        for (const auto& r : rows) list.push_back(to_json(r));
        body["scenarios"] = std::move(list);
        send_json(res, 200, body);
    });

    svr.Post("/v1/missions", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            send_error(res, 400, "bad_request", "body must be a JSON object");
            return;
        }
        if (!body.contains("instruction") || !body.at("instruction").is_string()) {
            send_error(res, 400, "bad_request", "instruction must be a string");
            return;
        }
        const std::string instruction = body.at("instruction").get<std::string>();
        if (canonicalize(instruction).empty()) {
            send_error(res, 400, "empty_instruction", "instruction is blank");
            return;
        }
        bool execute = false;
        if (body.contains("execute")) {
            if (!body.at("execute").is_boolean()) {
                send_error(res, 400, "bad_request", "execute must be a boolean");
                return;
            }
            execute = body.at("execute").get<bool>();
        }
        ScenarioTag tag = ScenarioTag::untagged;
        if (body.contains("scenario_tag") && !body.at("scenario_tag").is_null()) {
            const auto parsed = body.at("scenario_tag").is_string()
                                    ? scenario_tag_from_string(body.at("scenario_tag").get<std::string>())
                                    : std::nullopt;
            if (!parsed) {
                send_error(res, 400, "bad_request", "unknown scenario_tag");
                return;
            }
            tag = *parsed;
        }
        if (execute && executor_.busy()) {
            send_error(res, 409, "simulator_busy", "a mission is already executing");
            return;
        }

        // Grounding runs on its own thread so the request can give up at the
        // deadline; an abandoned grounding still finishes and logs its outcome.
        auto promise = std::make_shared<std::promise<GroundingOutcome>>();
        auto future = promise->get_future();
        auto done = std::make_shared<std::atomic<bool>>(false);
        std::jthread worker([grounder = grounder_, instruction, promise, done](std::stop_token stop) {
            try {
                promise->set_value(grounder->ground(instruction, std::nullopt, stop));
            } catch (...) {
                promise->set_exception(std::current_exception());
            }
            done->store(true);
        });
        const auto deadline = std::chrono::duration<double>(grounder_->deadline_s());
        if (future.wait_for(deadline) != std::future_status::ready) {
            worker.request_stop();
            {
                std::lock_guard lock(groundings_mutex_);
                std::erase_if(abandoned_, [](const Abandoned& a) { return a.done->load(); });
                abandoned_.push_back({done, std::move(worker)});
            }
            send_error(res, 504, "grounding_timeout", "grounding exceeded its deadline");
            return;
        }
        worker.join();
        const GroundingOutcome outcome = future.get();

        if (outcome.stage == GroundingStage::provider) {
            const bool unavailable =
                !outcome.provider_error || *outcome.provider_error != ProviderErrorKind::http_status;
            const std::string detail = outcome.defects.empty() ? "provider failed" : outcome.defects.front().detail;
            send_error(res, 502, unavailable ? "provider_unavailable" : "provider_refused", detail,
                       ordered_json{{"outcome_id", outcome.outcome_id}});
            return;
        }
        if (!outcome.ok()) {
            ordered_json defects = ordered_json::array();
            for (const auto& d : outcome.defects) defects.push_back(to_json(d));
            ordered_json extra;
            extra["outcome_id"] = outcome.outcome_id;
            extra["defects"] = std::move(defects);
            send_error(res, 422, "plan_rejected",
                       std::to_string(outcome.defects.size()) + " defect(s) in the model output", std::move(extra));
            return;
        }

        ordered_json reply;
        reply["outcome_id"] = outcome.outcome_id;
        reply["plan"] = plan_body(*outcome.plan);
        reply["provider_latency_s"] = outcome.provider_latency_s;
        if (!execute) {
            send_json(res, 200, reply);
            return;
        }
        const auto mission_id =
            executor_.try_start(*outcome.plan, tag, outcome.outcome_id, outcome.provider_latency_s);
        if (!mission_id) {
            send_error(res, 409, "simulator_busy", "a mission is already executing",
                       ordered_json{{"outcome_id", outcome.outcome_id}});
            return;
        }
        reply["mission_id"] = *mission_id;
        send_json(res, 202, reply);
    });

    svr.Get("/v1/missions", [this](const httplib::Request&, httplib::Response& res) {
        ordered_json list = ordered_json::array();
        for (const auto& s : executor_.list()) list.push_back(to_json(s));
        send_json(res, 200, ordered_json{{"missions", std::move(list)}});
    });

    svr.Get(R"(/v1/missions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto status = executor_.status(id);
        if (!status) {
            send_error(res, 404, "unknown_mission", "no mission '" + id + "'");
            return;
        }
        ordered_json body = to_json(*status);
        body["outcome_id"] = executor_.outcome_id(id).value_or("");
        body["plan"] = plan_body(*executor_.plan(id));
        send_json(res, 200, body);
    });

    svr.Post(R"(/v1/missions/([^/]+)/abort)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto phase = executor_.abort(id);
        if (!phase) {
            send_error(res, 404, "unknown_mission", "no mission '" + id + "'");
            return;
        }
        ordered_json body;
        body["mission_id"] = id;
        body["phase"] = to_string(*phase);
        send_json(res, 200, body);
    });

    svr.Get(R"(/v1/missions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        auto feed = executor_.feed(id);
        if (!feed) {
            send_error(res, 404, "unknown_mission", "no mission '" + id + "'");
            return;
        }
        std::size_t start = 0;
        if (req.has_header("Last-Event-ID")) {
            try {
                start = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
            } catch (const std::exception&) {
                send_error(res, 400, "bad_request", "Last-Event-ID must be a frame number");
                return;
            }
        }
        res.set_header("Cache-Control", "no-cache");
        const auto heartbeat = std::chrono::duration<double>(options_.heartbeat_s);
        auto next = std::make_shared<std::size_t>(start);
        res.set_chunked_content_provider(
            "text/event-stream", [this, feed, next, heartbeat](std::size_t, httplib::DataSink& sink) {
                const auto idle_since = std::chrono::steady_clock::now();
                while (!stopping_.load()) {
                    bool closed = false;
                    const auto frames = feed->read(*next, std::chrono::milliseconds(200), closed);
                    if (!frames.empty()) {
                        std::string chunk;
                        for (const auto& f : frames) chunk += sse_frame((*next)++, f);
                        if (!sink.write(chunk.data(), chunk.size())) return false;
                        if (closed) sink.done();
                        return true;
                    }
                    if (closed) {
                        sink.done();
                        return true;
                    }
                    if (std::chrono::steady_clock::now() - idle_since >= heartbeat) {
                        static constexpr std::string_view kBeat = ": heartbeat\n\n";
                        return sink.write(kBeat.data(), kBeat.size());
                    }
                    if (!sink.is_writable()) return false;
                }
                return false;
            });
    });
}

// ---------------------------------------------------------------------------

std::unique_ptr<Gateway> make_gateway(const ServiceConfig& config) {
    config.validate();
    auto world = std::make_shared<const WaypointWorld>(load_world(config.map_path));
    auto tmpl = std::make_shared<const PromptTemplate>(config.template_path ? load_template(*config.template_path, *world)
                                                                            : default_template(*world));
    std::shared_ptr<Provider> provider;
    if (config.mock) {
        provider = std::make_shared<MockProvider>(
            world, config.keywords ? load_keyword_table(*config.keywords) : default_keyword_table());
    } else {
        provider = std::make_shared<HttpChatProvider>(*config.provider);
    }
    std::shared_ptr<OutcomeLog> outcome_log;
    if (config.outcome_log) outcome_log = std::make_shared<OutcomeLog>(*config.outcome_log);
    GroundingOptions grounding_options;
    grounding_options.reprompt_on_invalid = config.reprompt_on_invalid;
    auto grounder = std::make_shared<const Grounder>(world, tmpl, provider, grounding_options, outcome_log);

    ExecutorConfig exec;
    exec.sim = config.sim;
    exec.policy = config.policy;
    exec.faults = config.faults;
    exec.seed = config.seed;
    exec.pace = config.pace;
    exec.record_log = config.mission_log;

    GatewayOptions options;
    options.heartbeat_s = config.heartbeat_s;
    options.metrics_log = config.mission_log;
    options.threads = config.threads;
    return std::make_unique<Gateway>(world, grounder, std::move(exec), options);
}

}  // namespace quadplan
