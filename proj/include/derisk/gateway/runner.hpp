#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "derisk/context/context.hpp"
#include "derisk/orchestrator/orchestrator.hpp"
#include "derisk/sim/scenario.hpp"

namespace derisk::gateway {

/// Service configuration file. Relative paths resolve against the file's directory.
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path scenario_dir;
    std::filesystem::path config_dir;   ///< agents.json, policies.json, *.plan, *.workflow
    std::string default_policy = "default";
    std::string default_preset = "v3";
    Json provider = {{"kind", "scripted"}};  ///< {"kind":"scripted"} or {"kind":"http", ...HttpProviderConfig}
    int heartbeat_seconds = 10;

    /// Paths default to the source tree's scenarios/ and config/.
    static ServiceConfig defaults();
    static ServiceConfig from_json(const Json& j, const std::filesystem::path& base);
    static ServiceConfig load(const std::filesystem::path& path);  ///< ConfigError
    Json to_json() const;
};

/// Registry, policies, SOP plans and workflows loaded once from a config directory.
struct Environment {
    session::AgentRegistry agents;
    context::PolicySet policies;
    std::map<std::string, reasoning::SopPlan> plans;
    std::map<std::string, orchestrator::WorkflowDef> workflows;

    /// Missing files fall back to built-in defaults; malformed ones raise ConfigError.
    static Environment load(const std::filesystem::path& config_dir);
};

/// A fired scenario with everything bound, ready for run_preset.
struct PreparedRun {
    sim::Scenario scenario;
    sim::FiredTask fired;
    context::ContextPolicy policy;
    std::unique_ptr<llm::Provider> external_provider;  ///< set when not scripted
    std::unique_ptr<orchestrator::HitlController> hitl;
    orchestrator::Runtime runtime;

    session::TaskSession& session() { return *fired.session; }
};

/// ConfigError for an unknown policy or provider kind; fire_trigger errors propagate.
std::unique_ptr<PreparedRun> prepare_run(const Environment& env, const sim::Scenario& scenario, session::Preset preset,
                                         const std::string& session_id, const std::string& policy = "default",
                                         const Json& provider = {{"kind", "scripted"}});

/// One event per line; `strip_ts` drops the ts field for determinism checks.
std::string render_event_log(const std::vector<session::VizEvent>& events, bool strip_ts);

struct CliRunOptions {
    std::string scenario;  ///< a directory, or an id under scenarios_dir
    std::string preset = "v3";
    std::string provider = "scripted";
    std::string policy = "default";
    std::filesystem::path scenarios_dir;
    std::filesystem::path config_dir;
    std::filesystem::path report_out;  ///< empty = <scenario>.<preset>.report.json in the working directory
    std::filesystem::path events_out;  ///< empty = <scenario>.<preset>.events.ndjson
    bool keep_ts = false;
    std::string session_id = "s-0001";
};

inline constexpr int kExitCompleted = 0;
inline constexpr int kExitFailed = 2;
inline constexpr int kExitInvalid = 3;

/// Headless run: exit 0 completed, 2 failed or cancelled, 3 on validation errors.
int cli_run(const CliRunOptions& options, std::ostream& out, std::ostream& err);

/// Scenario directory for an id or path; empty when neither resolves.
std::filesystem::path resolve_scenario(const std::string& name, const std::filesystem::path& scenarios_dir);

}  // namespace derisk::gateway
