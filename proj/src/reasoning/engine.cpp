#include "derisk/reasoning/engine.hpp"

#include <fstream>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/llm/tokens.hpp"

namespace derisk::reasoning {
namespace {

using session::EventDraft;
using session::EventKind;
using session::Message;
using session::MessageDraft;
using session::MessageKind;

constexpr std::pair<ActionType, std::string_view> kActionNames[] = {
    {ActionType::tool_call, "tool_call"},
    {ActionType::handoff, "handoff"},
    {ActionType::phase_complete, "phase_complete"},
    {ActionType::final, "final"},
};

constexpr std::size_t kCueQueryTokens = 64;

[[noreturn]] void malformed(const std::string& what) { fail(Errc::MalformedAction, what); }

/// End (exclusive) of the balanced JSON object starting at `open`, string-aware.
std::optional<std::size_t> object_end(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i + 1;
    }
    return std::nullopt;
}

std::string require_string(const Json& obj, const char* key, bool nonempty) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) malformed(std::string("action field '") + key + "' must be a string");
    auto v = it->get<std::string>();
    if (nonempty && text::trim(v).empty()) malformed(std::string("action field '") + key + "' is empty");
    return v;
}

AgentAction action_from_object(const Json& j) {
    AgentAction a;
    a.thought = require_string(j, "thought", false);
    const auto& act = j["action"];
    if (!act.is_object()) malformed("'action' must be an object");
    a.type = parse_action_type(require_string(act, "type", true));
    switch (a.type) {
        case ActionType::tool_call: {
            a.tool = require_string(act, "tool", true);
            auto it = act.find("arguments");
            if (it == act.end()) a.arguments = Json::object();
            else if (it->is_object()) a.arguments = *it;
            else malformed("tool_call arguments must be an object");
            break;
        }
        case ActionType::handoff:
            a.target = require_string(act, "target", true);
            a.task = require_string(act, "task", true);
            break;
        case ActionType::phase_complete: break;
        case ActionType::final: a.answer = require_string(act, "answer", true); break;
    }
    return a;
}

const std::set<ActionType> kReactVariants{ActionType::tool_call, ActionType::handoff, ActionType::final};

std::string latest_query(const std::vector<Message>& visible, const std::string& agent_id) {
    std::string q;
    for (const auto& m : visible)
        if (m.kind == MessageKind::user_task || (m.kind == MessageKind::handoff && m.recipient == agent_id))
            q = m.text();
    return q;
}

std::string tool_listing(const AgentRun& run) {
    std::string out;
    for (const auto& name : run.agent->allowed_tools) {
        std::optional<mcp::ToolDescriptor> d;
        if (run.tools) d = run.tools->find(name);
        if (!d) continue;
        out += "- " + d->name + "(";
        for (std::size_t i = 0; i < d->params.size(); ++i) {
            if (i) out += ", ";
            out += d->params[i].name + ": " + std::string(mcp::to_string(d->params[i].type));
        }
        out += "): " + d->description + "\n";
    }
    return out;
}

llm::ChatRequest build_request(const AgentRun& run, const context::ContextWindow& window, const StepFrame& frame) {
    std::string system;
    std::string body;
    for (const auto& seg : window.segments) {
        if (seg.cls == context::SegmentClass::system_profile) {
            system = seg.text;
            continue;
        }
        if (!body.empty()) body += "\n\n";
        body += seg.text;
    }
    system += "\n\n" + grammar_text();
    const auto tools = tool_listing(run);
    if (!tools.empty()) system += "\nTools:\n" + tools;
    if (!frame.phase_prompt.empty()) system += "\nPhase '" + frame.phase + "': " + frame.phase_prompt;

    llm::ChatRequest req;
    req.messages.push_back({llm::Role::system, system});
    if (!body.empty()) req.messages.push_back({llm::Role::user, body});
    return req;
}

ActionType variant_check(const AgentAction& a, const std::set<ActionType>& allowed) {
    if (!allowed.count(a.type))
        fail(Errc::DisallowedVariant, std::string(to_string(a.type)) + " is not allowed here");
    return a.type;
}

MessageDraft draft_for(const AgentRun& run, MessageKind kind, Json content) {
    MessageDraft d;
    d.sender = run.agent->agent_id;
    d.kind = kind;
    d.content = std::move(content);
    d.scopes = {run.scope_id};
    return d;
}

std::string one_liner(const Message& result, const std::vector<Message>& visible) {
    std::string tool = "tool";
    for (const auto& m : visible)
        if (result.parent && m.message_id == *result.parent && m.content.is_object())
            tool = m.content.value("tool", tool);
    std::string line;
    const auto tr = mcp::ToolCallResult::from_json(result.content);
    if (const auto* data = tr.first_data(); data && data->contains("points") && (*data)["points"].is_array() &&
                                            !(*data)["points"].empty()) {
        const auto& pts = (*data)["points"];
        line = data->value("app", std::string("?")) + "/" + data->value("metric", std::string("?")) + " " +
               std::to_string(pts.size()) + " points, " + pts.front()[1].dump() + " -> " + pts.back()[1].dump();
    } else if (const auto* d = tr.first_data()) {
        line = canonical_dump(*d);
    } else {
        line = tr.text();
    }
    if (tr.is_error) line = "error: " + line;
    for (auto& c : line)
        if (c == '\n') c = ' ';
    return "- " + tool + ": " + context::truncate_to_tokens(line, 40);
}

std::string final_answer_of(const std::vector<Message>& visible) {
    for (auto it = visible.rbegin(); it != visible.rend(); ++it) {
        const auto& m = *it;
        if (m.kind == MessageKind::final_answer || m.kind == MessageKind::report) return m.text();
        if (m.kind == MessageKind::thought && m.content.is_object() && m.content.contains("action")) {
            const auto& act = m.content["action"];
            if (act.value("type", std::string()) == "final") return act.value("answer", std::string());
        }
    }
    return "no conclusion reached";
}

}  // namespace

std::string_view to_string(ActionType t) noexcept {
    for (const auto& [k, n] : kActionNames)
        if (k == t) return n;
    return "final";
}

ActionType parse_action_type(std::string_view name) {
    for (const auto& [k, n] : kActionNames)
        if (n == name) return k;
    malformed("unknown action type '" + std::string(name) + "'");
}

Json AgentAction::to_json() const {
    Json act;
    act["type"] = std::string(to_string(type));
    switch (type) {
        case ActionType::tool_call:
            act["tool"] = tool;
            act["arguments"] = arguments.is_null() ? Json::object() : arguments;
            break;
        case ActionType::handoff:
            act["target"] = target;
            act["task"] = task;
            break;
        case ActionType::phase_complete: break;
        case ActionType::final: act["answer"] = answer; break;
    }
    Json j;
    j["thought"] = thought;
    j["action"] = std::move(act);
    return j;
}

AgentAction parse_action(std::string_view output) {
    for (auto open = output.find('{'); open != std::string_view::npos; open = output.find('{', open + 1)) {
        const auto end = object_end(output, open);
        if (!end) continue;
        Json j;
        try {
            j = Json::parse(output.substr(open, *end - open));
        } catch (const Json::parse_error&) {
            continue;
        }
        if (!j.is_object() || !j.contains("thought") || !j.contains("action")) continue;
        return action_from_object(j);
    }
    malformed("no {\"thought\":..,\"action\":{..}} object in model output");
}

void check_allowed(const AgentAction& action, const session::AgentProfile& agent) {
    if (action.type == ActionType::tool_call && !agent.allowed_tools.count(action.tool))
        fail(Errc::DisallowedTool, agent.agent_id + " may not call '" + action.tool + "'");
}

std::string grammar_text() {
    return "Reply with exactly one JSON object {\"thought\": string, \"action\": A} where A is one of "
           "{\"type\":\"tool_call\",\"tool\":name,\"arguments\":{...}}, "
           "{\"type\":\"handoff\",\"target\":agent_id,\"task\":text}, "
           "{\"type\":\"phase_complete\"}, {\"type\":\"final\",\"answer\":text}.";
}

void SopPlan::validate() const {
    if (phases.empty()) fail(Errc::ConfigError, "plan '" + name + "' has no phases");
    for (const auto& p : phases) {
        if (p.max_steps == 0) fail(Errc::ConfigError, "phase '" + p.name + "' needs max_steps > 0");
        if (!p.allowed_variants.count(ActionType::phase_complete) && !p.allowed_variants.count(ActionType::final))
            fail(Errc::ConfigError, "phase '" + p.name + "' allows no terminal variant");
    }
}

SopPlan SopPlan::from_json(const Json& j) {
    SopPlan plan;
    try {
        plan.name = j.value("name", std::string());
        const auto& phases = j.at("phases");
        for (std::size_t i = 0; i < phases.size(); ++i) {
            const auto& pj = phases[i];
            SopPhase p;
            p.name = pj.at("name").get<std::string>();
            p.prompt_template = pj.value("prompt_template", std::string());
            p.max_steps = pj.value("max_steps", p.max_steps);
            if (pj.contains("allowed_variants")) {
                for (const auto& v : pj["allowed_variants"]) p.allowed_variants.insert(parse_action_type(v.get<std::string>()));
            } else {
                const bool last = i + 1 == phases.size();
                p.allowed_variants = {ActionType::tool_call, last ? ActionType::final : ActionType::phase_complete};
            }
            plan.phases.push_back(std::move(p));
        }
    } catch (const Json::exception& e) {
        fail(Errc::ConfigError, std::string("malformed SOP plan: ") + e.what());
    } catch (const Error& e) {
        fail(Errc::ConfigError, "malformed SOP plan: " + e.detail());
    }
    plan.validate();
    return plan;
}

SopPlan SopPlan::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::ConfigError, "cannot open " + path.string());
    try {
        auto plan = from_json(Json::parse(in));
        if (plan.name.empty()) plan.name = path.stem().string();
        return plan;
    } catch (const Json::parse_error& e) {
        fail(Errc::ConfigError, path.string() + ": " + e.what());
    }
}

Json SopPlan::to_json() const {
    Json phases_j = Json::array();
    for (const auto& p : phases) {
        Json variants = Json::array();
        for (auto v : p.allowed_variants) variants.push_back(std::string(to_string(v)));
        phases_j.push_back({{"name", p.name},
                            {"prompt_template", p.prompt_template},
                            {"allowed_variants", std::move(variants)},
                            {"max_steps", p.max_steps}});
    }
    return {{"name", name}, {"phases", std::move(phases_j)}};
}

EngineKind EngineKind::parse(std::string_view name) {
    EngineKind k;
    if (name == "react") k.kind = Kind::react;
    else if (name == "summarizer") k.kind = Kind::summarizer;
    else if (name == "summarizer:llm") k.kind = Kind::summarizer_llm;
    else if (name == "rl_dynamic") k.kind = Kind::rl_dynamic;
    else if (name.starts_with("sop:") && name.size() > 4) {
        k.kind = Kind::sop;
        k.plan = std::string(name.substr(4));
    } else {
        fail(Errc::ConfigError, "unknown reasoning engine '" + std::string(name) + "'");
    }
    return k;
}

std::string step_cue(const std::string& agent_id, const StepFrame& frame, const std::string& query, bool repair) {
    return "[agent=" + agent_id + " phase=" + frame.phase + " step=" + std::to_string(frame.step) +
           (repair ? " repair" : "") + "]\ntask: " + context::truncate_to_tokens(query, kCueQueryTokens);
}

StepResult react_step(AgentRun& run, const StepFrame& frame) {
    auto& session = *run.session;
    const auto& agent = *run.agent;
    const auto visible = session.visible_messages(run.scope_id);
    const auto query = latest_query(visible, agent.agent_id);
    const auto snippets = run.knowledge ? run.knowledge(query) : std::vector<context::Snippet>{};
    const auto window = context::assemble(visible, *run.policy, agent, snippets);
    if (run.on_context) run.on_context(agent.agent_id, window);

    auto request = build_request(run, window, frame);
    request.messages.push_back({llm::Role::user, step_cue(agent.agent_id, frame, query, false)});
    const auto& allowed = frame.allowed ? *frame.allowed : kReactVariants;

    StepResult result;
    for (int attempt = 0;; ++attempt) {
        const auto reply = run.provider->complete(request);
        try {
            result.action = parse_action(reply.text);
            check_allowed(result.action, agent);
            variant_check(result.action, allowed);
            break;
        } catch (const Error& e) {
            const bool repairable = e.code() == Errc::MalformedAction || e.code() == Errc::DisallowedTool ||
                                    e.code() == Errc::DisallowedVariant;
            if (!repairable || attempt == 1) throw;
            EventDraft w;
            w.kind = EventKind::warning;
            w.agent_id = agent.agent_id;
            w.payload = {{"reason", "repair"}, {"step", frame.step}, {"phase", frame.phase}, {"error", e.what()}};
            session.emit(w);
            result.repaired = true;
            request.messages.push_back({llm::Role::assistant, reply.text});
            request.messages.push_back({llm::Role::user, "Invalid reply (" + e.detail() + "). " + grammar_text() +
                                                             "\n" + step_cue(agent.agent_id, frame, query, true)});
        }
    }

    const auto& action = result.action;
    if (action.type == ActionType::tool_call) {
        const auto& call = session.append(draft_for(
            run, MessageKind::tool_call,
            Json{{"thought", action.thought}, {"tool", action.tool}, {"arguments", action.arguments}}));
        const auto call_id = call.message_id;
        result.appended.push_back(call_id);
        session.emit({EventKind::thought, agent.agent_id, {{"message_id", call_id}, {"thought", action.thought}}});
        session.emit({EventKind::tool_call, agent.agent_id,
                      {{"message_id", call_id}, {"tool", action.tool}, {"arguments", action.arguments}}});

        mcp::ToolCallResult outcome;
        try {
            outcome = run.tools ? run.tools->call(action.tool, action.arguments)
                                : mcp::ToolCallResult::error("no tool client bound");
        } catch (const Error& e) {
            outcome = mcp::ToolCallResult::error(e.what());
        }
        auto rd = draft_for(run, MessageKind::tool_result, outcome.to_json());
        rd.parent = call_id;
        const auto result_id = session.append(std::move(rd)).message_id;
        result.appended.push_back(result_id);
        session.emit({EventKind::tool_result, agent.agent_id,
                      {{"message_id", result_id}, {"tool", action.tool}, {"is_error", outcome.is_error}}});
    } else {
        const auto id = session.append(draft_for(run, MessageKind::thought, action.to_json())).message_id;
        result.appended.push_back(id);
        session.emit({EventKind::thought, agent.agent_id,
                      {{"message_id", id}, {"thought", action.thought}, {"action", std::string(to_string(action.type))}}});
    }
    return result;
}

RunOutcome react_run(AgentRun& run) {
    RunOutcome out;
    for (std::size_t step = 1; step <= run.max_steps; ++step) {
        if (run.on_step) run.on_step(run.agent->agent_id, step);
        StepFrame frame;
        frame.step = step;
        frame.allowed = kReactVariants;
        auto r = react_step(run, frame);
        out.steps = step;
        if (r.action.type == ActionType::handoff || r.action.type == ActionType::final) {
            out.terminal = std::move(r.action);
            return out;
        }
    }
    fail(Errc::StepLimitExceeded,
         run.agent->agent_id + " reached " + std::to_string(run.max_steps) + " steps without a final answer");
}

RunOutcome sop_run(AgentRun& run, const SopPlan& plan) {
    plan.validate();
    RunOutcome out;
    for (std::size_t index = 0; index < plan.phases.size(); ++index) {
        const auto& phase = plan.phases[index];
        const bool last = index + 1 == plan.phases.size();
        out.phases.push_back(phase.name);
        run.session->emit({EventKind::agent_started, run.agent->agent_id,
                           {{"phase", phase.name}, {"phase_index", index}, {"plan", plan.name}}});
        bool advanced = false;
        for (std::size_t step = 1; step <= phase.max_steps && !advanced; ++step) {
            if (out.steps >= run.max_steps)
                fail(Errc::StepLimitExceeded,
                     run.agent->agent_id + " reached " + std::to_string(run.max_steps) + " steps");
            if (run.on_step) run.on_step(run.agent->agent_id, out.steps + 1);
            StepFrame frame;
            frame.phase = phase.name;
            frame.phase_prompt = phase.prompt_template;
            frame.allowed = phase.allowed_variants;
            frame.step = step;
            auto r = react_step(run, frame);
            ++out.steps;
            switch (r.action.type) {
                case ActionType::tool_call: break;
                case ActionType::phase_complete:
                    advanced = true;
                    if (last) {
                        out.terminal = r.action;
                        out.terminal.type = ActionType::final;
                        out.terminal.answer = r.action.thought;
                        return out;
                    }
                    break;
                case ActionType::final:
                case ActionType::handoff: out.terminal = std::move(r.action); return out;
            }
        }
        if (!advanced)
            fail(Errc::PhaseStepLimit, "phase '" + phase.name + "' exceeded " + std::to_string(phase.max_steps) + " steps");
    }
    fail(Errc::PreconditionViolation, "plan ended without a terminal action");
}

std::string summarize_run(const std::vector<Message>& visible, llm::Provider* provider, const std::string& agent_id) {
    if (visible.empty()) fail(Errc::PreconditionViolation, "summarize_run needs a nonempty transcript");
    if (provider) {
        std::string body;
        for (const auto& m : visible)
            body += "[" + m.sender + " " + std::string(session::to_string(m.kind)) + "] " + m.text() + "\n";
        llm::ChatRequest req;
        req.messages.push_back({llm::Role::system,
                                "Write a concise diagnostic report: root cause, evidence, handling opinion."});
        req.messages.push_back({llm::Role::user, body});
        req.messages.push_back({llm::Role::user, "[agent=" + agent_id + " summarize]"});
        auto text = text::trim(provider->complete(req).text);
        if (!text.empty()) return text;
    }
    std::string task;
    for (const auto& m : visible)
        if (m.kind == MessageKind::user_task) {
            task = m.text();
            break;
        }
    if (task.empty()) task = visible.front().text();
    std::string out = "Task: " + task + "\nFindings:\n";
    bool any = false;
    for (const auto& m : visible)
        if (m.kind == MessageKind::tool_result) {
            out += one_liner(m, visible) + "\n";
            any = true;
        }
    if (!any) out += "- no tool evidence\n";
    out += "Answer: " + final_answer_of(visible);
    return out;
}

RunOutcome run_agent(AgentRun& run) {
    const auto kind = EngineKind::parse(run.agent->reasoning_engine);
    switch (kind.kind) {
        case EngineKind::Kind::react: return react_run(run);
        case EngineKind::Kind::sop: {
            if (!run.plans || !run.plans->count(kind.plan))
                fail(Errc::ConfigError, "unknown SOP plan '" + kind.plan + "'");
            return sop_run(run, run.plans->at(kind.plan));
        }
        case EngineKind::Kind::summarizer:
        case EngineKind::Kind::summarizer_llm: {
            if (run.on_step) run.on_step(run.agent->agent_id, 1);
            const auto visible = run.session->visible_messages(run.scope_id);
            auto* provider = kind.kind == EngineKind::Kind::summarizer_llm ? run.provider : nullptr;
            RunOutcome out;
            out.terminal.thought = "summarize upstream findings";
            out.terminal.type = ActionType::final;
            out.terminal.answer = summarize_run(visible, provider, run.agent->agent_id);
            const auto id =
                run.session->append(draft_for(run, MessageKind::thought, out.terminal.to_json())).message_id;
            run.session->emit({EventKind::thought, run.agent->agent_id,
                               {{"message_id", id}, {"thought", out.terminal.thought}, {"action", "final"}}});
            out.steps = 1;
            return out;
        }
        case EngineKind::Kind::rl_dynamic:
            fail(Errc::NotImplemented, "the rl_dynamic engine is a reserved slot and does not run");
    }
    fail(Errc::ConfigError, "unhandled engine kind");
}

}  // namespace derisk::reasoning
