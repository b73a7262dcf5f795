#include "derisk/gateway/server.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"

namespace derisk::gateway {

namespace {

constexpr std::size_t kWorkerThreads = 32;

int http_status(Errc code) {
    switch (code) {
        case Errc::UnknownSession: return 404;
        case Errc::IllegalTransition: return 409;
        case Errc::ScenarioValidationError:
        case Errc::ConfigError:
        case Errc::InvalidPolicy: return 422;
        default: return 400;
    }
}

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

void send_error(httplib::Response& res, const Error& e, Json extra = Json::object()) {
    extra["error"] = e.detail();
    extra["code"] = std::string(to_string(e.code()));
    send_json(res, http_status(e.code()), extra);
}

}  // namespace

struct SessionManager::Entry {
    std::unique_ptr<PreparedRun> run;
    std::shared_ptr<session::EventLog> log;
    std::thread worker;
    mutable std::mutex mutex;
    std::optional<Json> report;
};

SessionManager::SessionManager(ServiceConfig config, Environment env)
    : config_(std::move(config)), env_(std::move(env)) {}

SessionManager::~SessionManager() { shutdown(); }

Json SessionManager::create(const std::string& scenario, const std::string& preset, const std::string& policy) {
    const auto dir = resolve_scenario(scenario, config_.scenario_dir);
    if (dir.empty() || scenario.find("..") != std::string::npos)
        fail(Errc::ScenarioValidationError, "unknown scenario '" + scenario + "'");
    const auto sc = sim::load_scenario(dir);
    const auto p = session::parse_preset(preset.empty() ? config_.default_preset : preset);
    auto entry = std::make_shared<Entry>();
    const auto id = ids_.next();
    entry->run = prepare_run(env_, sc, p, id, policy.empty() ? config_.default_policy : policy, config_.provider);
    entry->log = entry->run->session().event_log();
    {
        std::lock_guard lock(mutex_);
        sessions_[id] = entry;
    }
    entry->worker = std::thread([entry] {
        auto report = orchestrator::run_preset(entry->run->session(), entry->run->runtime);
        std::lock_guard lock(entry->mutex);
        entry->report = report.to_json();
    });
    return {{"session_id", id},
            {"scenario", sc.scenario_id},
            {"preset", sim::preset_key(p)},
            {"events", "/sessions/" + id + "/events"}};
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(Errc::UnknownSession, "unknown session '" + session_id + "'");
    return it->second;
}

std::shared_ptr<session::EventLog> SessionManager::events(const std::string& session_id) const {
    return find(session_id)->log;
}

session::SessionStatus SessionManager::status(const std::string& session_id) const {
    return find(session_id)->run->session().status();
}

void SessionManager::intervene(const std::string& session_id, orchestrator::Intervention intervention) {
    auto entry = find(session_id);
    orchestrator::intervene(*entry->run->hitl, std::move(intervention));
}

std::optional<Json> SessionManager::report(const std::string& session_id) const {
    auto entry = find(session_id);
    std::lock_guard lock(entry->mutex);
    return entry->report;
}

Json SessionManager::scenarios() const {
    Json list = Json::array();
    Json errors = Json::array();
    for (const auto& id : sim::list_scenarios(config_.scenario_dir)) {
        try {
            const auto sc = sim::load_scenario(config_.scenario_dir / id);
            Json presets = Json::array();
            for (const auto& [key, path] : sc.scripts) presets.push_back(key);
            list.push_back({{"scenario_id", sc.scenario_id}, {"description", sc.description}, {"presets", presets}});
        } catch (const Error& e) {
            errors.push_back({{"scenario_id", id}, {"error", e.detail()}});
        }
    }
    return {{"scenarios", std::move(list)}, {"errors", std::move(errors)}};
}

void SessionManager::shutdown() {
    std::vector<std::shared_ptr<Entry>> all;
    {
        std::lock_guard lock(mutex_);
        for (auto& [id, e] : sessions_) all.push_back(e);
    }
    for (auto& e : all) {
        if (!session::is_terminal(e->run->session().status())) {
            try {
                e->run->hitl->submit({orchestrator::InterventionKind::abort, {}});
            } catch (const Error&) {
            }
        }
        if (e->worker.joinable()) e->worker.join();
    }
}

struct GatewayServer::Impl {
    explicit Impl(ServiceConfig config, Environment env) : sessions(std::move(config), std::move(env)) {}

    SessionManager sessions;
    httplib::Server http;
    std::thread listener;
    std::atomic<bool> stopping{false};
    int port = 0;

    void routes();
    void stream(const httplib::Request& req, httplib::Response& res);
};

void GatewayServer::Impl::routes() {
    http.new_task_queue = [] { return new httplib::ThreadPool(kWorkerThreads); };

    http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        Json body;
        try {
            body = req.body.empty() ? Json::object() : Json::parse(req.body);
        } catch (const Json::exception& e) {
            send_json(res, 400, {{"error", std::string("malformed body: ") + e.what()}});
            return;
        }
        if (!body.is_object() || !body.contains("scenario") || !body["scenario"].is_string()) {
            send_json(res, 400, {{"error", "body needs a scenario"}});
            return;
        }
        try {
            send_json(res, 201,
                      sessions.create(body["scenario"].get<std::string>(), body.value("preset", std::string()),
                                      body.value("policy", std::string())));
        } catch (const Error& e) {
            Json extra = Json::object();
            if (e.code() == Errc::ScenarioValidationError) {
                Json lines = Json::array();
                for (const auto& l : text::split_lines(e.detail()))
                    if (!text::trim(l).empty()) lines.push_back(text::trim(l));
                extra["errors"] = std::move(lines);
            }
            send_error(res, e, extra);
        }
    });

    http.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto id = req.matches[1].str();
            send_json(res, 200,
                      {{"session_id", id},
                       {"status", std::string(session::to_string(sessions.status(id)))},
                       {"last_seq", sessions.events(id)->last_seq()}});
        } catch (const Error& e) {
            send_error(res, e);
        }
    });

    http.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        stream(req, res);
    });

    http.Post(R"(/sessions/([^/]+)/intervene)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        orchestrator::Intervention intervention;
        try {
            auto body = Json::parse(req.body);
            intervention.kind = orchestrator::parse_intervention(body.at("kind").get<std::string>());
            intervention.text = body.value("text", std::string());
        } catch (const std::exception& e) {
            send_json(res, 400, {{"error", std::string("malformed intervention: ") + e.what()}});
            return;
        }
        try {
            sessions.intervene(id, intervention);
            send_json(res, 200, {{"accepted", true},
                                 {"kind", std::string(orchestrator::to_string(intervention.kind))},
                                 {"status", std::string(session::to_string(sessions.status(id)))}});
        } catch (const Error& e) {
            Json extra = Json::object();
            if (e.code() == Errc::IllegalTransition)
                extra["status"] = std::string(session::to_string(sessions.status(id)));
            send_error(res, e, extra);
        }
    });

    http.Get(R"(/sessions/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto id = req.matches[1].str();
            if (auto report = sessions.report(id)) {
                send_json(res, 200, *report);
            } else {
                send_json(res, 202, {{"status", std::string(session::to_string(sessions.status(id)))}});
            }
        } catch (const Error& e) {
            send_error(res, e);
        }
    });

    http.Get("/scenarios", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, sessions.scenarios());
    });
}

void GatewayServer::Impl::stream(const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    std::shared_ptr<session::EventLog> log;
    std::int64_t after = 0;
    try {
        log = sessions.events(id);
        if (req.has_param("after")) after = std::stoll(req.get_param_value("after"));
    } catch (const Error& e) {
        send_error(res, e);
        return;
    } catch (const std::exception&) {
        send_json(res, 400, {{"error", "after must be an integer"}});
        return;
    }
    const auto heartbeat = std::chrono::seconds(sessions.config().heartbeat_seconds);
    auto cursor = std::make_shared<std::int64_t>(after);
    res.set_chunked_content_provider(
        "application/x-ndjson", [this, log, cursor, heartbeat](std::size_t, httplib::DataSink& sink) {
            if (stopping) return false;
            auto batch = log->wait_after(*cursor, heartbeat);
            if (batch.empty()) {
                if (log->closed() && log->last_seq() <= *cursor) {
                    sink.done();
                    return true;
                }
                const auto line = Json{{"kind", "heartbeat"}, {"last_seq", *cursor}}.dump() + "\n";
                return sink.write(line.data(), line.size());
            }
            std::string chunk;
            for (const auto& e : batch) {
                chunk += e.to_json().dump() + "\n";
                *cursor = e.seq;
            }
            return sink.write(chunk.data(), chunk.size());
        });
}

GatewayServer::GatewayServer(ServiceConfig config, Environment env)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(env))) {
    impl_->routes();
}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::start() {
    const auto& cfg = impl_->sessions.config();
    if (cfg.port == 0) {
        impl_->port = impl_->http.bind_to_any_port(cfg.host);
    } else if (impl_->http.bind_to_port(cfg.host, cfg.port)) {
        impl_->port = cfg.port;
    } else {
        impl_->port = -1;
    }
    if (impl_->port <= 0) fail(Errc::ConfigError, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    impl_->listener = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return impl_->port;
}

void GatewayServer::run() {
    const auto& cfg = impl_->sessions.config();
    if (!impl_->http.listen(cfg.host, cfg.port)) fail(Errc::ConfigError, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
}

void GatewayServer::stop() {
    if (!impl_) return;
    impl_->stopping = true;
    impl_->sessions.shutdown();
    impl_->http.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

SessionManager& GatewayServer::sessions() noexcept { return impl_->sessions; }

}  // namespace derisk::gateway
