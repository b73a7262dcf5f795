#include "derisk/orchestrator/plan.hpp"

#include <algorithm>
#include <fstream>
#include <queue>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"

namespace derisk::orchestrator {

namespace {

[[noreturn]] void grammar(const std::string& msg) { fail(Errc::PlanGrammarError, msg); }

std::vector<std::string> split_path(std::string_view s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto dot = s.find('.', pos);
        if (dot == std::string_view::npos) dot = s.size();
        out.emplace_back(s.substr(pos, dot - pos));
        pos = dot + 1;
    }
    return out;
}

bool is_reference(const Json& v) {
    if (!v.is_string()) return false;
    const auto& s = v.get_ref<const std::string&>();
    return s.rfind("$task.", 0) == 0 || s.rfind("$steps.", 0) == 0;
}

template <typename Fn>
void for_each_reference(const Json& templ, Fn&& fn) {
    if (is_reference(templ)) {
        fn(templ.get<std::string>());
    } else if (templ.is_object() || templ.is_array()) {
        for (const auto& v : templ) for_each_reference(v, fn);
    }
}

const Json* walk(const Json& root, const std::vector<std::string>& path, std::size_t from) {
    const Json* cur = &root;
    for (std::size_t i = from; i < path.size(); ++i) {
        const auto& key = path[i];
        if (cur->is_object()) {
            if (!cur->contains(key)) return nullptr;
            cur = &(*cur)[key];
        } else if (cur->is_array()) {
            if (key.empty() || !std::all_of(key.begin(), key.end(), ::isdigit)) return nullptr;
            auto idx = std::stoul(key);
            if (idx >= cur->size()) return nullptr;
            cur = &(*cur)[idx];
        } else {
            return nullptr;
        }
    }
    return cur;
}

}  // namespace

Json OrchestrationPlan::to_json() const {
    Json arr = Json::array();
    for (const auto& s : subtasks) {
        Json a;
        if (s.assignee.kind == Assignee::Kind::sub_agent) {
            a["type"] = "sub_agent";
            a["agent"] = s.assignee.agent_id;
            a["mode"] = std::string(session::to_string(s.assignee.mode));
        } else {
            a["type"] = "workflow";
            a["workflow"] = s.assignee.workflow_id;
        }
        arr.push_back({{"id", s.subtask_id},
                       {"description", s.description},
                       {"assignee", std::move(a)},
                       {"depends_on", Json(s.depends_on)}});
    }
    return {{"subtasks", std::move(arr)}};
}

OrchestrationPlan OrchestrationPlan::from_json(const Json& j) {
    if (!j.is_object() || !j.contains("subtasks") || !j["subtasks"].is_array()) grammar("plan needs a subtasks array");
    OrchestrationPlan plan;
    for (const auto& sj : j["subtasks"]) {
        if (!sj.is_object()) grammar("subtask must be an object");
        Subtask s;
        if (!sj.contains("id") || !sj["id"].is_string()) grammar("subtask needs a string id");
        s.subtask_id = sj["id"].get<std::string>();
        if (!sj.contains("description") || !sj["description"].is_string())
            grammar("subtask " + s.subtask_id + " needs a description");
        s.description = sj["description"].get<std::string>();
        if (!sj.contains("assignee") || !sj["assignee"].is_object()) grammar("subtask " + s.subtask_id + " needs an assignee");
        const auto& a = sj["assignee"];
        const auto type = a.value("type", std::string());
        if (type == "sub_agent") {
            s.assignee.kind = Assignee::Kind::sub_agent;
            if (!a.contains("agent") || !a["agent"].is_string()) grammar("sub_agent assignee needs an agent");
            s.assignee.agent_id = a["agent"].get<std::string>();
            const auto mode = a.value("mode", std::string("team"));
            if (mode == "team") s.assignee.mode = session::ScopeMode::team;
            else if (mode == "group") s.assignee.mode = session::ScopeMode::group;
            else grammar("mode must be team or group, got '" + mode + "'");
        } else if (type == "workflow") {
            s.assignee.kind = Assignee::Kind::workflow;
            if (!a.contains("workflow") || !a["workflow"].is_string()) grammar("workflow assignee needs a workflow");
            s.assignee.workflow_id = a["workflow"].get<std::string>();
        } else {
            grammar("assignee type must be sub_agent or workflow");
        }
        if (sj.contains("depends_on")) {
            if (!sj["depends_on"].is_array()) grammar("depends_on must be an array");
            for (const auto& d : sj["depends_on"]) {
                if (!d.is_string()) grammar("depends_on entries must be strings");
                s.depends_on.insert(d.get<std::string>());
            }
        }
        plan.subtasks.push_back(std::move(s));
    }
    return plan;
}

std::vector<std::string> OrchestrationPlan::topological_order() const {
    std::map<std::string, std::size_t> indegree;
    std::map<std::string, std::vector<std::string>> dependents;
    for (const auto& s : subtasks) indegree[s.subtask_id] += 0;
    for (const auto& s : subtasks)
        for (const auto& d : s.depends_on) {
            ++indegree[s.subtask_id];
            dependents[d].push_back(s.subtask_id);
        }
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, n] : indegree)
        if (n == 0) ready.push(id);
    std::vector<std::string> order;
    while (!ready.empty()) {
        auto id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& next : dependents[id])
            if (--indegree[next] == 0) ready.push(next);
    }
    if (order.size() != indegree.size()) grammar("dependency graph has a cycle");
    return order;
}

void validate_plan(const OrchestrationPlan& plan, const session::AgentRegistry& agents, const std::string& supervisor,
                   const std::set<std::string>& workflows, std::size_t max_subtasks) {
    if (plan.subtasks.empty()) grammar("plan has no subtasks");
    if (plan.subtasks.size() > max_subtasks)
        fail(Errc::PlanTooLarge, std::to_string(plan.subtasks.size()) + " subtasks exceed the cap of " +
                                     std::to_string(max_subtasks));
    std::set<std::string> ids;
    for (const auto& s : plan.subtasks) {
        if (s.subtask_id.empty()) grammar("empty subtask id");
        if (!ids.insert(s.subtask_id).second) grammar("duplicate subtask id " + s.subtask_id);
    }
    auto closure = agents.closure(supervisor);
    std::set<std::string> reachable(closure.begin() + 1, closure.end());
    for (const auto& s : plan.subtasks) {
        for (const auto& d : s.depends_on) {
            if (!ids.count(d)) grammar(s.subtask_id + " depends on unknown " + d);
            if (d == s.subtask_id) grammar(s.subtask_id + " depends on itself");
        }
        if (s.assignee.kind == Assignee::Kind::sub_agent) {
            if (!reachable.count(s.assignee.agent_id))
                grammar(s.subtask_id + ": '" + s.assignee.agent_id + "' is not a sub-agent of " + supervisor);
        } else if (!workflows.count(s.assignee.workflow_id)) {
            grammar(s.subtask_id + ": unknown workflow '" + s.assignee.workflow_id + "'");
        }
    }
    plan.topological_order();
}

std::string plan_grammar_text() {
    return "Reply with exactly one JSON object {\"subtasks\":[S,...]} where S is "
           "{\"id\":text,\"description\":text,\"assignee\":A,\"depends_on\":[id,...]} and A is "
           "{\"type\":\"sub_agent\",\"agent\":agent_id,\"mode\":\"team\"|\"group\"} or "
           "{\"type\":\"workflow\",\"workflow\":workflow_id}.";
}

void WorkflowDef::validate() const {
    if (workflow_id.empty()) fail(Errc::ConfigError, "workflow needs an id");
    if (steps.empty()) fail(Errc::ConfigError, "workflow '" + workflow_id + "' has no steps");
    std::set<std::string> earlier;
    for (const auto& step : steps) {
        if (step.step_id.empty() || step.tool.empty()) fail(Errc::ConfigError, "workflow step needs step_id and tool");
        if (earlier.count(step.step_id)) fail(Errc::ConfigError, "duplicate step id " + step.step_id);
        for_each_reference(step.arguments, [&](const std::string& ref) {
            auto parts = split_path(std::string_view(ref).substr(1));
            if (parts[0] == "task") {
                if (parts.size() < 2 || parts[1].empty()) fail(Errc::UnresolvedPath, ref + ": no task field");
                return;
            }
            if (parts.size() < 3 || parts[2].empty()) fail(Errc::UnresolvedPath, ref + ": no path into the step output");
            if (!earlier.count(parts[1]))
                fail(Errc::UnresolvedPath, step.step_id + " references '" + parts[1] + "', which is not an earlier step");
        });
        earlier.insert(step.step_id);
    }
}

WorkflowDef WorkflowDef::from_json(const Json& j) {
    WorkflowDef w;
    try {
        w.workflow_id = j.at("workflow_id").get<std::string>();
        for (const auto& sj : j.at("steps"))
            w.steps.push_back({sj.at("step_id").get<std::string>(), sj.at("tool").get<std::string>(),
                               sj.value("arguments", Json::object())});
    } catch (const Json::exception& e) {
        fail(Errc::ConfigError, std::string("malformed workflow: ") + e.what());
    }
    w.validate();
    return w;
}

WorkflowDef WorkflowDef::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::ConfigError, "cannot open " + path.string());
    try {
        return from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        fail(Errc::ConfigError, path.string() + ": " + e.what());
    }
}

Json WorkflowDef::to_json() const {
    Json steps_j = Json::array();
    for (const auto& s : steps) steps_j.push_back({{"step_id", s.step_id}, {"tool", s.tool}, {"arguments", s.arguments}});
    return {{"workflow_id", workflow_id}, {"steps", std::move(steps_j)}};
}

Json resolve_arguments(const Json& templ, const Json& task_fields, const std::map<std::string, Json>& steps) {
    if (is_reference(templ)) {
        const auto ref = templ.get<std::string>();
        auto parts = split_path(std::string_view(ref).substr(1));
        const Json* found = nullptr;
        if (parts[0] == "task") {
            found = walk(task_fields, parts, 1);
        } else if (parts.size() >= 3) {
            auto it = steps.find(parts[1]);
            if (it != steps.end()) found = walk(it->second, parts, 2);
        }
        if (!found) fail(Errc::UnresolvedPath, ref);
        return *found;
    }
    if (templ.is_object()) {
        Json out = Json::object();
        for (const auto& [k, v] : templ.items()) out[k] = resolve_arguments(v, task_fields, steps);
        return out;
    }
    if (templ.is_array()) {
        Json out = Json::array();
        for (const auto& v : templ) out.push_back(resolve_arguments(v, task_fields, steps));
        return out;
    }
    return templ;
}

std::map<std::string, WorkflowDef> load_workflows(const std::filesystem::path& dir) {
    std::map<std::string, WorkflowDef> out;
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) return out;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".workflow") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto w = WorkflowDef::load(f);
        auto id = w.workflow_id;
        if (!out.emplace(id, std::move(w)).second) fail(Errc::ConfigError, "duplicate workflow " + id);
    }
    return out;
}

}  // namespace derisk::orchestrator
