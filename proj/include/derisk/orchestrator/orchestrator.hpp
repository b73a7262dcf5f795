#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "derisk/context/context.hpp"
#include "derisk/orchestrator/plan.hpp"
#include "derisk/reasoning/engine.hpp"
#include "derisk/sim/scenario.hpp"
#include "derisk/sim/trend.hpp"

namespace derisk::orchestrator {

enum class InterventionKind { pause, resume, inject_guidance, abort };
std::string_view to_string(InterventionKind k) noexcept;
InterventionKind parse_intervention(std::string_view name);  ///< PreconditionViolation

struct Intervention {
    InterventionKind kind = InterventionKind::pause;
    std::string text;  ///< inject_guidance
};

/// Accepts interventions from any thread and applies them on the session owner's thread at step
/// boundaries.
class HitlController {
public:
    explicit HitlController(session::TaskSession& session) : session_(session) {}

    /// Applied when `agent` reaches `step`, as if submitted at that boundary.
    void schedule(const std::string& agent, std::size_t step, Intervention intervention);

    /// Checks legality against the current status, emits hitl_received and queues.
    /// IllegalTransition ("illegal transition from <status>") otherwise.
    void submit(Intervention intervention);

    /// Owner thread only. Applies queued interventions; blocks while paused.
    /// Throws Error(Cancelled) after moving the session to cancelled.
    void boundary(const std::string& agent, std::size_t step);

private:
    void check_and_emit(const Intervention& i);

    session::TaskSession& session_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Intervention> queue_;
    std::vector<std::tuple<std::string, std::size_t, Intervention, bool>> scheduled_;
    bool pause_pending_ = false;
};

/// Everything a run needs besides the session.
struct Runtime {
    const session::AgentRegistry* agents = nullptr;
    const context::ContextPolicy* policy = nullptr;
    llm::Provider* provider = nullptr;
    const mcp::ToolClient* tools = nullptr;
    const std::map<std::string, reasoning::SopPlan>* plans = nullptr;
    const std::map<std::string, WorkflowDef>* workflows = nullptr;
    std::function<std::vector<context::Snippet>(const std::string&)> knowledge;
    std::function<void(const std::string&, const context::ContextWindow&)> on_context;
    HitlController* hitl = nullptr;
    context::DistillFn distiller;  ///< empty = deterministic fallback
    Json task_fields = Json::object();
    std::vector<std::string> expected_findings;
    std::vector<std::string> blind_fields;
    std::optional<sim::DualRunSpec> dual_run;
    double drift_threshold = sim::kDefaultDriftThreshold;
    std::size_t max_steps = reasoning::kDefaultMaxSteps;
    std::size_t max_subtasks = kDefaultMaxSubtasks;
    std::string phased_plan = "rca_phased";
    std::string reporter = "report-agent";
};

struct SubtaskReport {
    std::string subtask_id;
    std::string assignee;  ///< agent id or "workflow:<id>"
    context::DistilledReport report;
    std::string message_id;  ///< the report message in the group scope
    Json to_json() const;
};

/// Supervisor call constrained to the plan grammar, one repair retry. Emits plan_created.
/// PlanGrammarError; PlanTooLarge.
OrchestrationPlan decompose(session::TaskSession& session, const Runtime& rt);

/// Subtasks run one at a time in topological order (ties by subtask_id). Dependents receive
/// upstream DistilledReports in their handoff. On failures the rest still run where their
/// dependencies succeeded; then SubtaskFailed naming the first failed subtask.
std::vector<SubtaskReport> execute_plan(session::TaskSession& session, const OrchestrationPlan& plan, const Runtime& rt);

/// Steps run in order in a private scope; report via the deterministic distiller.
/// UnresolvedPath; StepFailed(step_id) on an is_error result.
context::DistilledReport run_workflow(session::TaskSession& session, const WorkflowDef& workflow,
                                      const Json& task_fields, const Runtime& rt);

struct DualRunResult {
    std::string sanitized_task;
    std::string analysis_scope;
    std::string critic_scope;
    SubtaskReport analysis;
    std::string critic_statement;
    std::optional<sim::Verdict> legacy_verdict;
    std::optional<sim::Verdict> blind_verdict;
    bool agreement = false;
    Json to_json() const;
};

/// Exact-substring removal of the legacy conclusion and blind fields; SanitizationLeak when one survives.
std::string sanitize(const std::string& task, const std::vector<std::string>& blind);

/// Blind analysis in an isolated team scope, then the critic in a group scope that sees the
/// legacy conclusion and the analysis. PreconditionViolation on an empty legacy conclusion.
DualRunResult dual_run(session::TaskSession& session, const Runtime& rt, const std::string& task,
                       const std::string& legacy_conclusion, const std::string& analysis_agent,
                       const std::string& critic_agent);

struct DiagnosticReport {
    std::string session_id;
    std::string preset;
    std::string status;
    std::string root_cause;
    std::string handling_opinion;
    std::string summary;
    std::optional<sim::Verdict> verdict;         ///< from the metric evidence
    std::optional<sim::Verdict> stated_verdict;  ///< as worded by the lead agent
    Json trend;                                  ///< window statistics behind `verdict`, or null
    double drift_threshold = sim::kDefaultDriftThreshold;
    std::vector<std::string> evidence_pointers;
    std::vector<SubtaskReport> distilled_reports;
    std::optional<DualRunResult> dual_run;
    std::optional<int> score;
    std::string error;

    Json to_json() const;
};

/// Runs the session's preset to a terminal status and returns the report. Failures end the
/// session as failed (cancelled after an abort) with `error` set; nothing is thrown for them.
DiagnosticReport run_preset(session::TaskSession& session, const Runtime& rt);

/// Forwards to the controller; IllegalTransition when the status forbids it.
void intervene(HitlController& hitl, Intervention intervention);

}  // namespace derisk::orchestrator
