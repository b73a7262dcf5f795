#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"

namespace derisk::session {

struct AgentProfile {
    std::string agent_id;
    std::string display_name;
    std::string role_description;
    std::set<std::string> expertise_tags;
    std::set<std::string> allowed_tools;
    std::string reasoning_engine = "react";  ///< "react", "sop:<plan>", "summarizer", "summarizer:llm", "rl_dynamic"
    std::vector<std::string> sub_agents;
    std::string system_prompt;

    bool operator==(const AgentProfile&) const = default;

    static AgentProfile from_json(const Json& j);
    Json to_json() const;
};

class AgentRegistry {
public:
    /// Throws InvalidProfile on a duplicate agent_id.
    void add(AgentProfile profile);
    const AgentProfile& get(const std::string& agent_id) const;  ///< UnknownAgent
    bool contains(const std::string& agent_id) const { return profiles_.count(agent_id) != 0; }
    std::vector<std::string> ids() const { return order_; }

    /// Sub-agents resolve and are acyclic; every allowed tool is in `registered_tools`.
    void validate(const std::set<std::string>& registered_tools) const;

    /// Target plus its transitive sub-agents, target first.
    std::vector<std::string> closure(const std::string& agent_id) const;

    static AgentRegistry from_json(const Json& array);
    static AgentRegistry load(const std::filesystem::path& path);

    /// The five stock profiles (sre-agent, code-agent, data-agent, vis-agent, report-agent).
    static AgentRegistry defaults();

private:
    std::map<std::string, AgentProfile> profiles_;
    std::vector<std::string> order_;
};

}  // namespace derisk::session
