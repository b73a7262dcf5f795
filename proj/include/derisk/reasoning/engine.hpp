#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"
#include "derisk/context/context.hpp"
#include "derisk/llm/provider.hpp"
#include "derisk/mcp/client.hpp"
#include "derisk/session/session.hpp"

namespace derisk::reasoning {

enum class ActionType { tool_call, handoff, phase_complete, final };

std::string_view to_string(ActionType t) noexcept;
ActionType parse_action_type(std::string_view name);  ///< MalformedAction when unknown

struct AgentAction {
    std::string thought;
    ActionType type = ActionType::final;
    std::string tool;       ///< tool_call
    Json arguments;         ///< tool_call
    std::string target;     ///< handoff
    std::string task;       ///< handoff
    std::string answer;     ///< final

    bool operator==(const AgentAction&) const = default;
    /// {"thought":..,"action":{"type":..,...}}
    Json to_json() const;
};

/// First well-formed {"thought":..,"action":{..}} object embedded in `output`.
/// MalformedAction when none exists or the variant's fields are wrong.
AgentAction parse_action(std::string_view output);

/// DisallowedTool when a tool_call names a tool outside the agent's allowed_tools.
void check_allowed(const AgentAction& action, const session::AgentProfile& agent);

/// The action grammar as given to the model.
std::string grammar_text();

struct SopPhase {
    std::string name;
    std::string prompt_template;
    std::set<ActionType> allowed_variants;
    std::size_t max_steps = 8;

    bool operator==(const SopPhase&) const = default;
};

struct SopPlan {
    std::string name;
    std::vector<SopPhase> phases;

    /// ConfigError: no phases, a phase without a terminal variant, or max_steps == 0.
    void validate() const;
    static SopPlan from_json(const Json& j);
    static SopPlan load(const std::filesystem::path& path);
    Json to_json() const;
};

struct EngineKind {
    enum class Kind { react, sop, summarizer, summarizer_llm, rl_dynamic };
    Kind kind = Kind::react;
    std::string plan;  ///< sop only

    /// "react", "sop:<plan>", "summarizer", "summarizer:llm", "rl_dynamic". ConfigError otherwise.
    static EngineKind parse(std::string_view name);
};

inline constexpr std::size_t kDefaultMaxSteps = 25;

/// Per-run wiring shared by every step of one agent.
struct AgentRun {
    session::TaskSession* session = nullptr;
    const session::AgentProfile* agent = nullptr;
    std::string scope_id;  ///< the scope whose visible messages feed the context
    const context::ContextPolicy* policy = nullptr;
    llm::Provider* provider = nullptr;
    const mcp::ToolClient* tools = nullptr;
    /// Optional retrieval over the latest query text.
    std::function<std::vector<context::Snippet>(const std::string&)> knowledge;
    /// Observes every assembled context (agent id, window).
    std::function<void(const std::string&, const context::ContextWindow&)> on_context;
    /// Called before each step; used by the orchestrator for HITL step boundaries.
    std::function<void(const std::string&, std::size_t)> on_step;
    std::size_t max_steps = kDefaultMaxSteps;
    const std::map<std::string, SopPlan>* plans = nullptr;
};

/// Phase constraints for one step.
struct StepFrame {
    std::string phase = "-";
    std::string phase_prompt;
    std::optional<std::set<ActionType>> allowed;
    std::size_t step = 1;
};

struct StepResult {
    AgentAction action;
    std::vector<std::string> appended;  ///< message ids, in order
    bool repaired = false;
};

/// One complete -> parse -> append cycle. tool_call actions are executed and their result
/// appended; handoff, phase_complete and final are recorded and returned unexecuted.
/// One repair retry on MalformedAction, DisallowedTool or DisallowedVariant.
StepResult react_step(AgentRun& run, const StepFrame& frame);

/// Last-user-message cue scripts match on.
std::string step_cue(const std::string& agent_id, const StepFrame& frame, const std::string& query, bool repair);

struct RunOutcome {
    AgentAction terminal;             ///< handoff or final (phase_complete of the last phase maps to final)
    std::size_t steps = 0;
    std::vector<std::string> phases;  ///< SOP phases visited, in order
};

/// ReAct loop until handoff or final. StepLimitExceeded after max_steps.
RunOutcome react_run(AgentRun& run);

/// Runs each phase in order. PhaseStepLimit past a phase's max_steps.
RunOutcome sop_run(AgentRun& run, const SopPlan& plan);

/// Provider path when `provider` is set, else the deterministic template.
/// PreconditionViolation on an empty transcript.
std::string summarize_run(const std::vector<session::Message>& visible, llm::Provider* provider,
                          const std::string& agent_id = "summarizer");

/// Dispatches on the agent's reasoning_engine.
RunOutcome run_agent(AgentRun& run);

}  // namespace derisk::reasoning
