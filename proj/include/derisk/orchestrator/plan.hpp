#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"
#include "derisk/session/agents.hpp"
#include "derisk/session/types.hpp"

namespace derisk::orchestrator {

inline constexpr std::size_t kDefaultMaxSubtasks = 8;

struct Assignee {
    enum class Kind { sub_agent, workflow };
    Kind kind = Kind::sub_agent;
    std::string agent_id;                                  ///< sub_agent
    session::ScopeMode mode = session::ScopeMode::team;    ///< sub_agent: team or group
    std::string workflow_id;                               ///< workflow
    bool operator==(const Assignee&) const = default;
};

struct Subtask {
    std::string subtask_id;
    std::string description;
    Assignee assignee;
    std::set<std::string> depends_on;
    bool operator==(const Subtask&) const = default;
};

struct OrchestrationPlan {
    std::vector<Subtask> subtasks;

    /// {"subtasks":[{"id","description","assignee":{"type":"sub_agent","agent","mode"}|
    ///  {"type":"workflow","workflow"},"depends_on":[...]}]}
    Json to_json() const;
    /// Shape only; PlanGrammarError on violations.
    static OrchestrationPlan from_json(const Json& j);
    /// Kahn order, ties broken by subtask_id.
    std::vector<std::string> topological_order() const;
};

/// Shape, unique ids, known dependencies, acyclicity and assignee resolution (an agent in the
/// supervisor's sub-agent closure, a registered workflow). PlanGrammarError; PlanTooLarge beyond `max_subtasks`.
void validate_plan(const OrchestrationPlan& plan, const session::AgentRegistry& agents, const std::string& supervisor,
                   const std::set<std::string>& workflows, std::size_t max_subtasks = kDefaultMaxSubtasks);

/// The plan grammar as given to the supervisor.
std::string plan_grammar_text();

struct WorkflowStep {
    std::string step_id;
    std::string tool;
    Json arguments;  ///< values may be "$task.<field>" or "$steps.<id>.<path>" references
    bool operator==(const WorkflowStep&) const = default;
};

struct WorkflowDef {
    std::string workflow_id;
    std::vector<WorkflowStep> steps;

    /// UnresolvedPath when a reference names the current or a later step, or has no path;
    /// ConfigError on shape errors.
    void validate() const;
    static WorkflowDef from_json(const Json& j);
    static WorkflowDef load(const std::filesystem::path& path);
    Json to_json() const;
};

/// Replaces reference strings inside `templ`. UnresolvedPath when a referenced value is missing.
/// `steps` maps step_id -> that step's data payload.
Json resolve_arguments(const Json& templ, const Json& task_fields, const std::map<std::string, Json>& steps);

/// All "*.workflow" files under `dir`, keyed by workflow_id.
std::map<std::string, WorkflowDef> load_workflows(const std::filesystem::path& dir);

}  // namespace derisk::orchestrator
