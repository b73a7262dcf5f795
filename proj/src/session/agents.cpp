#include "derisk/session/agents.hpp"

#include <fstream>
#include <functional>

#include "derisk/common/error.hpp"

namespace derisk::session {

AgentProfile AgentProfile::from_json(const Json& j) {
    AgentProfile p;
    try {
        p.agent_id = j.at("agent_id").get<std::string>();
        p.display_name = j.value("display_name", p.agent_id);
        p.role_description = j.value("role_description", std::string());
        for (const auto& t : j.value("expertise_tags", Json::array())) p.expertise_tags.insert(t.get<std::string>());
        for (const auto& t : j.value("allowed_tools", Json::array())) p.allowed_tools.insert(t.get<std::string>());
        p.reasoning_engine = j.value("reasoning_engine", std::string("react"));
        for (const auto& s : j.value("sub_agents", Json::array())) p.sub_agents.push_back(s.get<std::string>());
        p.system_prompt = j.value("system_prompt", std::string());
    } catch (const Json::exception& e) {
        fail(Errc::InvalidProfile, std::string("malformed agent profile: ") + e.what());
    }
    if (p.agent_id.empty()) fail(Errc::InvalidProfile, "agent_id must be non-empty");
    return p;
}

Json AgentProfile::to_json() const {
    Json j;
    j["agent_id"] = agent_id;
    j["display_name"] = display_name;
    j["role_description"] = role_description;
    j["expertise_tags"] = expertise_tags;
    j["allowed_tools"] = allowed_tools;
    j["reasoning_engine"] = reasoning_engine;
    j["sub_agents"] = sub_agents;
    j["system_prompt"] = system_prompt;
    return j;
}

void AgentRegistry::add(AgentProfile profile) {
    if (profiles_.count(profile.agent_id)) fail(Errc::InvalidProfile, "duplicate agent_id " + profile.agent_id);
    order_.push_back(profile.agent_id);
    profiles_.emplace(profile.agent_id, std::move(profile));
}

const AgentProfile& AgentRegistry::get(const std::string& agent_id) const {
    auto it = profiles_.find(agent_id);
    if (it == profiles_.end()) fail(Errc::UnknownAgent, agent_id);
    return it->second;
}

void AgentRegistry::validate(const std::set<std::string>& registered_tools) const {
    for (const auto& id : order_) {
        const auto& p = profiles_.at(id);
        for (const auto& tool : p.allowed_tools)
            if (!registered_tools.count(tool))
                fail(Errc::InvalidProfile, id + " allows unregistered tool " + tool);
        for (const auto& sub : p.sub_agents)
            if (!profiles_.count(sub)) fail(Errc::InvalidProfile, id + " lists unknown sub-agent " + sub);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    std::map<std::string, int> state;
    std::function<void(const std::string&)> visit = [&](const std::string& id) {
        state[id] = 1;
        for (const auto& sub : profiles_.at(id).sub_agents) {
            if (state[sub] == 1) fail(Errc::InvalidProfile, "sub-agent cycle through " + sub);
            if (state[sub] == 0) visit(sub);
        }
        state[id] = 2;
    };
    for (const auto& id : order_)
        if (state[id] == 0) visit(id);
}

std::vector<std::string> AgentRegistry::closure(const std::string& agent_id) const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::function<void(const std::string&)> walk = [&](const std::string& id) {
        if (!seen.insert(id).second) return;
        out.push_back(id);
        for (const auto& sub : get(id).sub_agents) walk(sub);
    };
    walk(agent_id);
    return out;
}

AgentRegistry AgentRegistry::from_json(const Json& array) {
    if (!array.is_array()) fail(Errc::InvalidProfile, "agent registry must be an array");
    AgentRegistry r;
    for (const auto& j : array) r.add(AgentProfile::from_json(j));
    return r;
}

AgentRegistry AgentRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::ConfigError, "cannot open " + path.string());
    try {
        return from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        fail(Errc::ConfigError, path.string() + ": " + e.what());
    }
}

AgentRegistry AgentRegistry::defaults() {
    AgentRegistry r;
    auto make = [](std::string id, std::string name, std::string role, std::set<std::string> tags,
                   std::set<std::string> tools, std::string engine, std::vector<std::string> subs, std::string prompt) {
        AgentProfile p;
        p.agent_id = std::move(id);
        p.display_name = std::move(name);
        p.role_description = std::move(role);
        p.expertise_tags = std::move(tags);
        p.allowed_tools = std::move(tools);
        p.reasoning_engine = std::move(engine);
        p.sub_agents = std::move(subs);
        p.system_prompt = std::move(prompt);
        return p;
    };
    r.add(make("sre-agent", "SRE-Agent", "Site Reliability Engineering and orchestration",
               {"incident coordination", "system monitoring", "agent orchestration"},
               {"get_app_metric", "analyze_trend", "search_logs", "query_knowledge"}, "react",
               {"code-agent", "data-agent", "vis-agent", "report-agent"},
               "You coordinate incident diagnosis. Decompose the task, delegate to specialists, and state the "
               "root cause and a handling opinion."));
    r.add(make("code-agent", "Code-Agent", "Dynamic code generation and analysis",
               {"runtime code generation", "static analysis", "code-based diagnostics"},
               {"search_logs", "query_knowledge"}, "react", {},
               "You analyze code paths and recent changes to locate faulty lines."));
    r.add(make("data-agent", "Data-Agent", "Data processing and analysis",
               {"log analysis", "trace processing", "metrics evaluation"},
               {"get_app_metric", "analyze_trend", "search_logs"}, "react", {},
               "You analyze metrics, logs and traces and report quantitative findings."));
    r.add(make("vis-agent", "Vis-Agent", "Visualization and evidence presentation",
               {"evidence chain visualization", "diagnostic flow rendering"}, {"get_app_metric"}, "react", {},
               "You assemble the evidence chain for presentation."));
    r.add(make("report-agent", "ReportAgent", "Report generation and documentation",
               {"diagnostic report creation", "findings summarization"}, {}, "summarizer", {},
               "You write a clear, concise diagnostic report from upstream findings."));
    return r;
}

}  // namespace derisk::session
