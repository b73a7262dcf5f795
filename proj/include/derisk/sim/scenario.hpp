#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"
#include "derisk/common/time.hpp"
#include "derisk/knowledge/index.hpp"
#include "derisk/llm/scripted.hpp"
#include "derisk/mcp/client.hpp"
#include "derisk/mcp/monitor.hpp"
#include "derisk/session/session.hpp"

namespace derisk::sim {

enum class AlarmSource { log_alarm, app_behavior, env_change, code_change };
std::string_view to_string(AlarmSource s) noexcept;
AlarmSource parse_alarm_source(std::string_view name);

struct AlarmEvent {
    AlarmSource source = AlarmSource::app_behavior;
    std::string app;
    std::string severity;  ///< P1..P4
    Timestamp fired_at = 0;
    std::string payload;
};

struct SeriesFixture {
    std::string app;
    std::string metric;
    std::string file;  ///< relative to the scenario directory
    mcp::Polarity polarity = mcp::Polarity::higher_is_worse;
};

struct LogFixture {
    std::string app;
    std::string file;
};

struct DualRunSpec {
    std::string legacy_conclusion;
    std::string analysis_agent;
    std::string critic_agent;
};

/// An intervention applied when `agent` reaches step `step`.
struct ScheduledIntervention {
    std::string agent;
    std::size_t step = 1;
    std::string action;  ///< inject_guidance | abort
    std::string text;
};

struct Scenario {
    std::string scenario_id;
    std::string description;
    std::filesystem::path dir;
    AlarmEvent trigger;
    std::string task_template;
    Json task_fields = Json::object();  ///< strings; analysis window under app/metric/start/end
    std::vector<SeriesFixture> series;
    std::vector<LogFixture> logs;
    std::string corpus;  ///< directory relative to `dir`, may be empty
    std::vector<std::string> expected_findings;
    std::vector<std::string> blind_fields;
    std::map<std::string, std::string> scripts;  ///< "v1"/"v2"/"v3" -> relative script path
    std::optional<DualRunSpec> dual_run;
    std::vector<ScheduledIntervention> hitl;
    double drift_threshold = 0.05;

    /// {{app}} {{severity}} {{source}} {{payload}} {{fired_at}} {{task.<field>}}.
    std::string render_task() const;
};

/// "scenario.json" + fixtures + scripts + optional "expected.findings" (one label per line).
/// ScenarioValidationError listing every broken reference.
Scenario load_scenario(const std::filesystem::path& dir);

/// Scenario ids under `root` (directories holding a scenario.json), sorted.
std::vector<std::string> list_scenarios(const std::filesystem::path& root);

struct LogLine {
    std::string file;
    std::size_t line_no = 0;
    std::string text;
    std::optional<Timestamp> ts;
};

/// Parsed fixtures, immutable after construction.
struct ScenarioAssets {
    std::shared_ptr<const mcp::MetricStore> metrics;
    std::map<std::string, std::vector<LogLine>> logs;  ///< app -> lines
    std::shared_ptr<knowledge::KnowledgeBase> knowledge;  ///< null when the scenario has no corpus
};

ScenarioAssets load_assets(const Scenario& scenario);

/// Scenario tool server: analyze_trend, search_logs, query_knowledge.
std::shared_ptr<mcp::ToolServer> make_scenario_server(const ScenarioAssets& assets, double drift_threshold,
                                                      std::string name = "mcp-sim");

/// Monitor plus scenario tools federated in-process.
std::shared_ptr<mcp::ToolClient> make_tool_client(const ScenarioAssets& assets, double drift_threshold);

/// A fired trigger: fresh session plus the bindings a run needs.
struct FiredTask {
    std::shared_ptr<session::TaskSession> session;
    std::shared_ptr<llm::ScriptedProvider> provider;
    std::shared_ptr<mcp::ToolClient> tools;
    ScenarioAssets assets;
};

/// Renders the task, creates the session and binds the preset's script. ConfigError when the
/// scenario ships no script for the preset; create_session errors propagate.
FiredTask fire_trigger(const Scenario& scenario, session::Preset preset, const session::AgentRegistry& agents,
                       const std::string& session_id, const std::string& supervisor = "sre-agent");

std::string preset_key(session::Preset preset);  ///< "v1" / "v2" / "v3"

}  // namespace derisk::sim
