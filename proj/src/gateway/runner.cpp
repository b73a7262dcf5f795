#include "derisk/gateway/runner.hpp"

#include <fstream>
#include <ostream>

#include "derisk/common/error.hpp"
#include "derisk/llm/http_provider.hpp"

namespace derisk::gateway {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSnippetCount = 2;

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void write_text(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::ConfigError, "cannot write " + path.string());
    out << body;
}

}  // namespace

ServiceConfig ServiceConfig::defaults() {
    ServiceConfig c;
    c.scenario_dir = fs::path(DERISK_SOURCE_DIR) / "scenarios";
    c.config_dir = fs::path(DERISK_SOURCE_DIR) / "config";
    return c;
}

ServiceConfig ServiceConfig::from_json(const Json& j, const fs::path& base) {
    auto c = defaults();
    try {
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        if (j.contains("scenario_dir")) c.scenario_dir = resolve(base, j["scenario_dir"].get<std::string>());
        if (j.contains("config_dir")) c.config_dir = resolve(base, j["config_dir"].get<std::string>());
        c.default_policy = j.value("default_policy", c.default_policy);
        c.default_preset = j.value("default_preset", c.default_preset);
        if (j.contains("provider")) c.provider = j["provider"];
        c.heartbeat_seconds = j.value("heartbeat_seconds", c.heartbeat_seconds);
    } catch (const Json::exception& e) {
        fail(Errc::ConfigError, std::string("malformed service config: ") + e.what());
    }
    if (c.port < 0 || c.port > 65535) fail(Errc::ConfigError, "port out of range");
    if (c.heartbeat_seconds <= 0) fail(Errc::ConfigError, "heartbeat_seconds must be positive");
    session::parse_preset(c.default_preset);
    return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::ConfigError, "cannot open " + path.string());
    try {
        return from_json(Json::parse(in), path.parent_path());
    } catch (const Json::parse_error& e) {
        fail(Errc::ConfigError, path.string() + ": " + e.what());
    }
}

Json ServiceConfig::to_json() const {
    return {{"host", host},
            {"port", port},
            {"scenario_dir", scenario_dir.string()},
            {"config_dir", config_dir.string()},
            {"default_policy", default_policy},
            {"default_preset", default_preset},
            {"provider", provider},
            {"heartbeat_seconds", heartbeat_seconds}};
}

Environment Environment::load(const fs::path& config_dir) {
    Environment env;
    std::error_code ec;
    const auto agents = config_dir / "agents.json";
    env.agents = fs::exists(agents, ec) ? session::AgentRegistry::load(agents) : session::AgentRegistry::defaults();
    const auto policies = config_dir / "policies.json";
    if (fs::exists(policies, ec)) env.policies = context::PolicySet::load(policies);
    if (fs::is_directory(config_dir, ec)) {
        std::vector<fs::path> plan_files;
        for (const auto& e : fs::directory_iterator(config_dir))
            if (e.is_regular_file() && e.path().extension() == ".plan") plan_files.push_back(e.path());
        std::sort(plan_files.begin(), plan_files.end());
        for (const auto& f : plan_files) {
            auto plan = reasoning::SopPlan::load(f);
            auto name = plan.name;
            env.plans.emplace(std::move(name), std::move(plan));
        }
    }
    env.workflows = orchestrator::load_workflows(config_dir);
    return env;
}

std::unique_ptr<PreparedRun> prepare_run(const Environment& env, const sim::Scenario& scenario, session::Preset preset,
                                         const std::string& session_id, const std::string& policy, const Json& provider) {
    auto run = std::make_unique<PreparedRun>();
    run->scenario = scenario;
    run->policy = env.policies.get(policy);
    const auto kind = provider.value("kind", std::string("scripted"));
    if (kind != "scripted" && kind != "http") fail(Errc::ConfigError, "unknown provider kind '" + kind + "'");
    run->fired = sim::fire_trigger(scenario, preset, env.agents, session_id);
    if (kind == "http") run->external_provider = std::make_unique<llm::HttpProvider>(llm::HttpProviderConfig::from_json(provider));
    run->hitl = std::make_unique<orchestrator::HitlController>(*run->fired.session);
    for (const auto& h : scenario.hitl)
        run->hitl->schedule(h.agent, h.step, {orchestrator::parse_intervention(h.action), h.text});

    auto& rt = run->runtime;
    rt.agents = &env.agents;
    rt.policy = &run->policy;
    rt.provider = run->external_provider ? run->external_provider.get() : run->fired.provider.get();
    rt.tools = run->fired.tools.get();
    rt.plans = &env.plans;
    rt.workflows = &env.workflows;
    if (auto kb = run->fired.assets.knowledge) {
        rt.knowledge = [kb](const std::string& query) {
            std::vector<context::Snippet> out;
            const auto snap = kb->snapshot();
            if (snap->chunks.empty() || query.empty()) return out;
            for (const auto& r : knowledge::retrieve(*snap, query, kSnippetCount).ranked)
                out.push_back({r.chunk_id, snap->chunks.at(r.chunk_id).chunk.text});
            return out;
        };
    }
    rt.hitl = run->hitl.get();
    rt.task_fields = scenario.task_fields;
    rt.expected_findings = scenario.expected_findings;
    rt.blind_fields = scenario.blind_fields;
    rt.dual_run = scenario.dual_run;
    rt.drift_threshold = scenario.drift_threshold;
    return run;
}

std::string render_event_log(const std::vector<session::VizEvent>& events, bool strip_ts) {
    std::string out;
    for (const auto& e : events) {
        auto j = e.to_json();
        if (strip_ts) j.erase("ts");
        out += j.dump() + "\n";
    }
    return out;
}

fs::path resolve_scenario(const std::string& name, const fs::path& scenarios_dir) {
    std::error_code ec;
    if (name.empty()) return {};
    if (fs::exists(fs::path(name) / "scenario.json", ec)) return fs::path(name);
    if (!scenarios_dir.empty() && fs::exists(scenarios_dir / name / "scenario.json", ec)) return scenarios_dir / name;
    return {};
}

int cli_run(const CliRunOptions& options, std::ostream& out, std::ostream& err) {
    try {
        const auto dir = resolve_scenario(options.scenario, options.scenarios_dir);
        if (dir.empty()) fail(Errc::ScenarioValidationError, "unknown scenario '" + options.scenario + "'");
        const auto scenario = sim::load_scenario(dir);
        const auto preset = session::parse_preset(options.preset);
        const auto env = Environment::load(options.config_dir);
        Json provider{{"kind", options.provider}};
        if (options.provider != "scripted")
            fail(Errc::ConfigError, "the run verb supports only the scripted provider, got '" + options.provider + "'");
        auto prepared = prepare_run(env, scenario, preset, options.session_id, options.policy, provider);
        auto report = orchestrator::run_preset(prepared->session(), prepared->runtime);

        const auto stem = scenario.scenario_id + "." + sim::preset_key(preset);
        const auto report_path = options.report_out.empty() ? fs::path(stem + ".report.json") : options.report_out;
        const auto events_path = options.events_out.empty() ? fs::path(stem + ".events.ndjson") : options.events_out;
        write_text(report_path, report.to_json().dump(2) + "\n");
        write_text(events_path, render_event_log(prepared->session().events().after(0), !options.keep_ts));
        out << scenario.scenario_id << " " << sim::preset_key(preset) << " " << report.status;
        if (report.verdict) out << " verdict=" << sim::to_string(*report.verdict);
        if (report.score) out << " score=" << *report.score;
        out << "\n";
        if (report.status != "completed") {
            err << "run " << report.status << ": " << report.error << "\n";
            return kExitFailed;
        }
        return kExitCompleted;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
}

}  // namespace derisk::gateway
