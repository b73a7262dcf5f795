#include "derisk/sim/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/mcp/server.hpp"
#include "derisk/sim/trend.hpp"

namespace derisk::sim {

namespace fs = std::filesystem;

namespace {

std::string human_time(Timestamp ts) {
    auto s = format_timestamp(ts);  // YYYY-MM-DDTHH:MM:SSZ
    s[10] = ' ';
    s.pop_back();
    return s;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<Timestamp> leading_timestamp(std::string_view line) {
    if (!line.empty() && line.front() == '[') line.remove_prefix(1);
    if (line.size() < 19) return std::nullopt;
    Timestamp ts = 0;
    if (!try_parse_timestamp(line.substr(0, 19), ts)) return std::nullopt;
    return ts;
}

// Headless runs have nobody to resume a pause, so scenarios schedule only these.
const std::set<std::string> kActions = {"inject_guidance", "abort"};

std::string render(const std::string& tmpl, const Scenario& s, std::vector<std::string>* problems) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto open = tmpl.find("{{", pos);
        if (open == std::string::npos) {
            out += tmpl.substr(pos);
            break;
        }
        auto close = tmpl.find("}}", open + 2);
        if (close == std::string::npos) {
            if (problems) problems->push_back("task_template: unterminated placeholder");
            out += tmpl.substr(pos);
            break;
        }
        out += tmpl.substr(pos, open - pos);
        const auto key = text::trim(std::string_view(tmpl).substr(open + 2, close - open - 2));
        std::optional<std::string> value;
        if (key == "app") value = s.trigger.app;
        else if (key == "severity") value = s.trigger.severity;
        else if (key == "source") value = std::string(to_string(s.trigger.source));
        else if (key == "payload") value = s.trigger.payload;
        else if (key == "fired_at") value = human_time(s.trigger.fired_at);
        else if (key.rfind("task.", 0) == 0) {
            const auto field = key.substr(5);
            if (s.task_fields.contains(field) && s.task_fields[field].is_string())
                value = s.task_fields[field].get<std::string>();
        }
        if (!value) {
            if (problems) problems->push_back("task_template: unknown placeholder {{" + key + "}}");
            value = "";
        }
        out += *value;
        pos = close + 2;
    }
    return out;
}

}  // namespace

std::string_view to_string(AlarmSource s) noexcept {
    switch (s) {
        case AlarmSource::log_alarm: return "log_alarm";
        case AlarmSource::app_behavior: return "app_behavior";
        case AlarmSource::env_change: return "env_change";
        case AlarmSource::code_change: return "code_change";
    }
    return "app_behavior";
}

AlarmSource parse_alarm_source(std::string_view name) {
    for (auto s : {AlarmSource::log_alarm, AlarmSource::app_behavior, AlarmSource::env_change, AlarmSource::code_change})
        if (to_string(s) == name) return s;
    fail(Errc::ScenarioValidationError, "unknown alarm source '" + std::string(name) + "'");
}

std::string Scenario::render_task() const {
    std::vector<std::string> problems;
    auto out = render(task_template, *this, &problems);
    if (!problems.empty()) fail(Errc::ScenarioValidationError, problems.front());
    return out;
}

std::string preset_key(session::Preset preset) {
    switch (preset) {
        case session::Preset::v1_basic_react: return "v1";
        case session::Preset::v2_phased: return "v2";
        case session::Preset::v3_multi_specialist: return "v3";
    }
    return "v1";
}

Scenario load_scenario(const fs::path& dir) {
    const auto manifest = dir / "scenario.json";
    std::error_code ec;
    if (!fs::is_regular_file(manifest, ec))
        fail(Errc::ScenarioValidationError, "missing manifest " + manifest.string());
    Json j;
    try {
        j = Json::parse(read_text(manifest));
    } catch (const Json::exception& e) {
        fail(Errc::ScenarioValidationError, manifest.string() + ": " + e.what());
    }

    std::vector<std::string> problems;
    auto str = [&](const Json& obj, const char* key, const std::string& where) -> std::string {
        if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string()) {
            problems.push_back(where + key + ": missing string");
            return {};
        }
        return obj[key].get<std::string>();
    };
    auto exists = [&](const std::string& rel, const std::string& what) {
        if (rel.empty() || !fs::exists(dir / rel, ec)) {
            problems.push_back(what + " '" + rel + "' does not resolve");
            return false;
        }
        return true;
    };

    Scenario s;
    s.dir = dir;
    s.scenario_id = str(j, "scenario_id", "");
    s.description = j.value("description", std::string());
    s.task_template = str(j, "task_template", "");
    if (j.contains("task_fields")) {
        if (j["task_fields"].is_object()) s.task_fields = j["task_fields"];
        else problems.push_back("task_fields: not an object");
    }
    s.drift_threshold = j.value("drift_threshold", 0.05);

    const Json trig = j.value("trigger", Json::object());
    try {
        s.trigger.source = parse_alarm_source(str(trig, "source", "trigger."));
    } catch (const Error& e) {
        problems.push_back("trigger.source: " + e.detail());
    }
    s.trigger.app = str(trig, "app", "trigger.");
    s.trigger.severity = str(trig, "severity", "trigger.");
    if (!s.trigger.severity.empty() &&
        (s.trigger.severity.size() != 2 || s.trigger.severity[0] != 'P' || s.trigger.severity[1] < '1' ||
         s.trigger.severity[1] > '4'))
        problems.push_back("trigger.severity: expected P1..P4");
    s.trigger.payload = str(trig, "payload", "trigger.");
    if (auto fired = str(trig, "fired_at", "trigger."); !fired.empty() && !try_parse_timestamp(fired, s.trigger.fired_at))
        problems.push_back("trigger.fired_at: unparseable '" + fired + "'");

    const Json fixtures = j.value("fixtures", Json::object());
    Timestamp lo = 0, hi = 0;
    bool have_range = false;
    for (const auto& f : fixtures.value("series", Json::array())) {
        SeriesFixture sf;
        sf.app = str(f, "app", "fixtures.series.");
        sf.metric = str(f, "metric", "fixtures.series.");
        sf.file = str(f, "file", "fixtures.series.");
        try {
            sf.polarity = mcp::parse_polarity(f.value("polarity", std::string("higher_is_worse")));
        } catch (const Error& e) {
            problems.push_back("fixtures.series.polarity: " + e.detail());
        }
        if (exists(sf.file, "series fixture")) {
            try {
                auto ts = mcp::MetricStore::read_csv(dir / sf.file, sf.app, sf.metric, sf.polarity);
                if (!ts.points.empty()) {
                    lo = have_range ? std::min(lo, ts.points.front().ts) : ts.points.front().ts;
                    hi = have_range ? std::max(hi, ts.points.back().ts) : ts.points.back().ts;
                    have_range = true;
                }
            } catch (const Error& e) {
                problems.push_back("series fixture '" + sf.file + "': " + e.detail());
            }
        }
        s.series.push_back(sf);
    }
    for (const auto& f : fixtures.value("logs", Json::array())) {
        LogFixture lf{str(f, "app", "fixtures.logs."), str(f, "file", "fixtures.logs.")};
        exists(lf.file, "log fixture");
        s.logs.push_back(lf);
    }
    s.corpus = fixtures.value("corpus", std::string());
    if (!s.corpus.empty() && !fs::is_directory(dir / s.corpus, ec))
        problems.push_back("corpus '" + s.corpus + "' does not resolve");
    if (have_range && (s.trigger.fired_at < lo || s.trigger.fired_at > hi))
        problems.push_back("trigger.fired_at outside the fixture time range");

    const Json scripts = j.value("scripts", Json::object());
    for (const auto& [preset, rel] : scripts.items()) {
        if (preset != "v1" && preset != "v2" && preset != "v3") {
            problems.push_back("scripts: unknown preset '" + preset + "'");
            continue;
        }
        if (!rel.is_string()) {
            problems.push_back("scripts." + preset + ": not a path");
            continue;
        }
        const auto path = rel.get<std::string>();
        if (exists(path, "script")) {
            try {
                llm::load_script(dir / path);
            } catch (const Error& e) {
                problems.push_back("script '" + path + "': " + e.detail());
            }
        }
        s.scripts[preset] = path;
    }

    if (fs::exists(dir / "expected.findings", ec)) {
        for (const auto& line : text::split_lines(read_text(dir / "expected.findings"))) {
            auto label = text::trim(line);
            if (!label.empty() && label[0] != '#') s.expected_findings.push_back(label);
        }
    }
    for (const auto& b : j.value("blind_fields", Json::array())) {
        if (b.is_string() && !b.get<std::string>().empty()) s.blind_fields.push_back(b.get<std::string>());
        else problems.push_back("blind_fields: entries must be non-empty strings");
    }
    if (j.contains("dual_run")) {
        const auto& d = j["dual_run"];
        DualRunSpec spec{str(d, "legacy_conclusion", "dual_run."), str(d, "analysis_agent", "dual_run."),
                         str(d, "critic_agent", "dual_run.")};
        s.dual_run = spec;
    }
    for (const auto& h : j.value("hitl", Json::array())) {
        ScheduledIntervention si;
        si.agent = str(h, "agent", "hitl.");
        si.step = h.value("step", std::size_t{1});
        si.action = str(h, "action", "hitl.");
        si.text = h.value("text", std::string());
        if (!si.action.empty() && !kActions.count(si.action)) problems.push_back("hitl.action: unknown '" + si.action + "'");
        s.hitl.push_back(si);
    }

    if (!s.task_template.empty()) {
        auto rendered = render(s.task_template, s, &problems);
        if (text::trim(rendered).empty()) problems.push_back("task_template renders empty");
    }
    if (!problems.empty()) {
        std::string msg = dir.filename().string() + ":";
        for (const auto& p : problems) msg += "\n  " + p;
        fail(Errc::ScenarioValidationError, msg);
    }
    return s;
}

std::vector<std::string> list_scenarios(const fs::path& root) {
    std::vector<std::string> out;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) fail(Errc::ScenarioValidationError, root.string() + " is not a directory");
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::exists(entry.path() / "scenario.json"))
            out.push_back(entry.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

ScenarioAssets load_assets(const Scenario& scenario) {
    ScenarioAssets a;
    auto store = std::make_shared<mcp::MetricStore>();
    for (const auto& f : scenario.series)
        store->add(mcp::MetricStore::read_csv(scenario.dir / f.file, f.app, f.metric, f.polarity));
    a.metrics = store;
    for (const auto& f : scenario.logs) {
        auto& lines = a.logs[f.app];
        std::size_t n = 0;
        for (const auto& line : text::split_lines(read_text(scenario.dir / f.file))) {
            ++n;
            if (text::trim(line).empty()) continue;
            lines.push_back({f.file, n, line, leading_timestamp(line)});
        }
    }
    if (!scenario.corpus.empty()) {
        a.knowledge = std::make_shared<knowledge::KnowledgeBase>();
        knowledge::load_corpus(*a.knowledge, scenario.dir / scenario.corpus, scenario.trigger.fired_at);
    }
    return a;
}

std::shared_ptr<mcp::ToolServer> make_scenario_server(const ScenarioAssets& assets, double drift_threshold,
                                                      std::string name) {
    using mcp::ParamType;
    auto server = std::make_shared<mcp::ToolServer>(std::move(name));

    mcp::ToolDescriptor trend;
    trend.name = "analyze_trend";
    trend.description = "Least-squares trend of a metric over an inclusive window, with a worsening/recovering/stable verdict.";
    trend.params = {{"app", ParamType::string, true, "application identifier"},
                    {"metric", ParamType::string, true, "metric identifier"},
                    {"start", ParamType::timestamp, true, "window start (inclusive)"},
                    {"end", ParamType::timestamp, true, "window end (inclusive)"}};
    trend.server = server->name();
    auto metrics = assets.metrics;
    server->register_tool(trend, [metrics, drift_threshold](const Json& args) {
        const auto app = args["app"].get<std::string>();
        const auto metric = args["metric"].get<std::string>();
        const auto start = parse_timestamp(args["start"].get<std::string>());
        const auto end = parse_timestamp(args["end"].get<std::string>());
        const auto window = mcp::get_app_metric(*metrics, app, metric, start, end);
        const auto stats = trend_verdict(window, start, end, drift_threshold);
        Json out;
        out["app"] = app;
        out["metric"] = metric;
        out["start"] = format_timestamp(start);
        out["end"] = format_timestamp(end);
        out["polarity"] = std::string(mcp::to_string(window.polarity));
        out["points"] = stats.points;
        out["slope"] = stats.slope;
        out["relative_drift"] = stats.relative_drift;
        out["threshold"] = drift_threshold;
        out["verdict"] = std::string(to_string(stats.verdict));
        return mcp::ToolCallResult::data(out);
    });

    mcp::ToolDescriptor logs;
    logs.name = "search_logs";
    logs.description = "Case-insensitive substring search over an app's log fixtures, optionally bounded in time.";
    logs.params = {{"app", ParamType::string, true, "application identifier"},
                   {"pattern", ParamType::string, true, "substring to look for"},
                   {"start", ParamType::timestamp, false, "earliest line timestamp"},
                   {"end", ParamType::timestamp, false, "latest line timestamp"}};
    logs.server = server->name();
    auto log_map = std::make_shared<const std::map<std::string, std::vector<LogLine>>>(assets.logs);
    server->register_tool(logs, [log_map](const Json& args) {
        const auto app = args["app"].get<std::string>();
        auto it = log_map->find(app);
        if (it == log_map->end()) fail(Errc::UnknownApp, "no logs for app '" + app + "'");
        const auto pattern = args["pattern"].get<std::string>();
        std::optional<Timestamp> start, end;
        if (args.contains("start")) start = parse_timestamp(args["start"].get<std::string>());
        if (args.contains("end")) end = parse_timestamp(args["end"].get<std::string>());
        Json matches = Json::array();
        for (const auto& l : it->second) {
            if (!text::contains_ci(l.text, pattern)) continue;
            if ((start || end) && !l.ts) continue;
            if (start && *l.ts < *start) continue;
            if (end && *l.ts > *end) continue;
            matches.push_back({{"file", l.file}, {"line", l.line_no}, {"text", l.text}});
        }
        Json out;
        out["app"] = app;
        out["pattern"] = pattern;
        out["count"] = matches.size();
        out["matches"] = std::move(matches);
        return mcp::ToolCallResult::data(out);
    });

    mcp::ToolDescriptor kq;
    kq.name = "query_knowledge";
    kq.description = "Hybrid retrieval over the scenario's knowledge corpus.";
    kq.params = {{"query", ParamType::string, true, "free-text query"},
                 {"k", ParamType::integer, false, "number of chunks, default 3"}};
    kq.server = server->name();
    auto kb = assets.knowledge;
    server->register_tool(kq, [kb](const Json& args) {
        if (!kb) fail(Errc::EmptyIndex, "this scenario has no knowledge corpus");
        const auto k = static_cast<std::size_t>(args.value("k", 3));
        if (k == 0) fail(Errc::PreconditionViolation, "k must be positive");
        const auto snap = kb->snapshot();
        const auto result = knowledge::retrieve(*snap, args["query"].get<std::string>(), k);
        Json items = Json::array();
        for (const auto& r : result.ranked) {
            const auto& c = snap->chunks.at(r.chunk_id).chunk;
            items.push_back({{"chunk_id", r.chunk_id}, {"doc_id", c.doc_id}, {"score", r.fused_score}, {"text", c.text}});
        }
        return mcp::ToolCallResult::data(Json{{"results", std::move(items)}});
    });
    return server;
}

std::shared_ptr<mcp::ToolClient> make_tool_client(const ScenarioAssets& assets, double drift_threshold) {
    auto client = std::make_shared<mcp::ToolClient>();
    client->add_endpoint(std::make_shared<mcp::InProcessEndpoint>(mcp::make_monitor_server(assets.metrics)));
    client->add_endpoint(
        std::make_shared<mcp::InProcessEndpoint>(make_scenario_server(assets, drift_threshold)));
    return client;
}

FiredTask fire_trigger(const Scenario& scenario, session::Preset preset, const session::AgentRegistry& agents,
                       const std::string& session_id, const std::string& supervisor) {
    const auto key = preset_key(preset);
    auto it = scenario.scripts.find(key);
    if (it == scenario.scripts.end())
        fail(Errc::ConfigError, "scenario '" + scenario.scenario_id + "' ships no script for " + key);
    FiredTask t;
    t.session = session::create_session(agents, scenario.render_task(), preset, supervisor, session_id);
    t.provider = std::make_shared<llm::ScriptedProvider>(llm::load_script(scenario.dir / it->second));
    t.assets = load_assets(scenario);
    t.tools = make_tool_client(t.assets, scenario.drift_threshold);
    return t;
}

}  // namespace derisk::sim
