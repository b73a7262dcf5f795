#include "derisk/orchestrator/orchestrator.hpp"

#include <algorithm>
#include <set>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/common/time.hpp"

namespace derisk::orchestrator {

using session::EventKind;
using session::MessageKind;
using session::SessionStatus;

namespace {

const std::pair<InterventionKind, std::string_view> kKindNames[] = {
    {InterventionKind::pause, "pause"},
    {InterventionKind::resume, "resume"},
    {InterventionKind::inject_guidance, "inject_guidance"},
    {InterventionKind::abort, "abort"},
};

Json verdict_json(const std::optional<sim::Verdict>& v) {
    return v ? Json(std::string(sim::to_string(*v))) : Json(nullptr);
}

reasoning::AgentRun make_run(session::TaskSession& session, const Runtime& rt, const session::AgentProfile& agent,
                             const std::string& scope) {
    reasoning::AgentRun run;
    run.session = &session;
    run.agent = &agent;
    run.scope_id = scope;
    run.policy = rt.policy;
    run.provider = rt.provider;
    run.tools = rt.tools;
    run.knowledge = rt.knowledge;
    run.on_context = rt.on_context;
    run.max_steps = rt.max_steps;
    run.plans = rt.plans;
    if (rt.hitl) run.on_step = [h = rt.hitl](const std::string& a, std::size_t s) { h->boundary(a, s); };
    return run;
}

/// Blind fields and anything else in `blind` vanish from text passed between scopes.
std::string strip_blind(std::string text, const std::vector<std::string>& blind) {
    for (const auto& b : blind)
        if (!b.empty()) text = text::replace_all(text, b, "");
    return text;
}

SubtaskReport publish(session::TaskSession& session, const std::string& subtask_id, const std::string& assignee,
                      context::DistilledReport report) {
    Json content = report.to_json();
    content["subtask_id"] = subtask_id;
    content["assignee"] = assignee;
    const auto& msg = session.append({"system", MessageKind::report, content, std::nullopt, std::nullopt,
                                      {session.group_scope_id()}});
    SubtaskReport out{subtask_id, assignee, std::move(report), msg.message_id};
    session.emit({EventKind::report_distilled, assignee,
                  {{"subtask_id", subtask_id}, {"message_id", out.message_id}, {"report", out.report.to_json()}}});
    session.add_artifact({{"type", "distilled_report"}, {"report", out.to_json()}});
    return out;
}

std::string describe_report(const SubtaskReport& r) {
    std::string s = "- " + r.subtask_id + " (" + r.assignee + "): " + r.report.conclusion;
    if (!r.report.key_findings.empty()) {
        s += "\n  findings:";
        for (const auto& f : r.report.key_findings) s += "\n  * " + f;
    }
    if (!r.report.evidence_pointers.empty()) {
        s += "\n  evidence:";
        for (const auto& p : r.report.evidence_pointers) s += " " + p;
    }
    return s;
}

/// Hands `task` to `agent_id` in a fresh team scope (or the group scope) and distills its answer.
SubtaskReport dispatch_agent(session::TaskSession& session, const Runtime& rt, const std::string& subtask_id,
                             const std::string& agent_id, session::ScopeMode mode, const std::string& task,
                             std::string* scope_out = nullptr) {
    const auto& target = rt.agents->get(agent_id);
    std::string scope;
    if (mode == session::ScopeMode::group) {
        scope = session.group_scope_id();
        session.add_member(scope, agent_id);
    } else {
        auto closure = rt.agents->closure(agent_id);
        scope = session.create_scope(session::ScopeMode::team, {closure.begin(), closure.end()});
    }
    if (scope_out) *scope_out = scope;
    const auto& handoff = session.append({session.supervisor(), MessageKind::handoff, Json(task), std::nullopt,
                                          agent_id, {scope}});
    session.emit({EventKind::handoff, session.supervisor(),
                  {{"message_id", handoff.message_id},
                   {"target", agent_id},
                   {"mode", std::string(session::to_string(mode))},
                   {"subtask_id", subtask_id},
                   {"scope_id", scope}}});
    session.emit({EventKind::agent_started, agent_id, {{"subtask_id", subtask_id}, {"scope_id", scope}}});

    auto run = make_run(session, rt, target, scope);
    auto outcome = reasoning::run_agent(run);
    if (outcome.terminal.type != reasoning::ActionType::final)
        fail(Errc::ConfigError, agent_id + " handed off to " + outcome.terminal.target + "; nested handoffs are unsupported");
    auto report = context::distill(outcome.terminal.answer, session.visible_messages(scope), rt.expected_findings,
                                   rt.distiller);
    return publish(session, subtask_id, agent_id, std::move(report));
}

std::optional<Json> extract_object(const std::string& text) {
    auto open = text.find('{');
    auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
    try {
        return Json::parse(text.substr(open, close - open + 1));
    } catch (const Json::exception&) {
        return std::nullopt;
    }
}

std::string latest_query(const session::TaskSession& session) {
    for (auto it = session.transcript().rbegin(); it != session.transcript().rend(); ++it)
        if (it->kind == MessageKind::user_task) return it->text();
    return session.root_task();
}

std::string step_summary(const WorkflowStep& step, const mcp::ToolCallResult& result) {
    const Json* data = result.first_data();
    if (data && data->is_object() && data->contains("points") && (*data)["points"].is_array()) {
        const auto& pts = (*data)["points"];
        std::string s = step.step_id + ": " + step.tool + " returned " + data->value("app", std::string()) + "/" +
                        data->value("metric", std::string()) + " with " + std::to_string(pts.size()) + " points";
        if (!pts.empty() && pts.front().is_array() && pts.back().is_array())
            s += " from " + pts.front()[1].dump() + " to " + pts.back()[1].dump();
        return s + ".";
    }
    auto body = data ? data->dump() : result.text();
    return step.step_id + ": " + step.tool + " returned " + body.substr(0, text::utf8_floor(body, 400)) + ".";
}

/// Root cause text and the handling opinion after a "Handling:" marker.
std::pair<std::string, std::string> split_answer(const std::string& answer) {
    auto lower = text::to_lower(answer);
    auto pos = lower.find("handling:");
    std::string cause = pos == std::string::npos ? answer : answer.substr(0, pos);
    std::string handling = pos == std::string::npos ? "" : answer.substr(pos + 9);
    cause = text::trim(cause);
    if (text::to_lower(cause).rfind("root cause:", 0) == 0) cause = text::trim(cause.substr(11));
    return {cause, text::trim(handling)};
}

/// Verdict over the last get_app_metric result among `pointers`, windowed by its call arguments.
std::pair<std::optional<sim::Verdict>, Json> evidence_verdict(const session::TaskSession& session,
                                                              const std::vector<std::string>& pointers,
                                                              double threshold) {
    std::pair<std::optional<sim::Verdict>, Json> out{std::nullopt, Json(nullptr)};
    for (const auto& id : pointers) {
        if (!session.has_message(id)) continue;
        const auto& msg = session.message(id);
        if (msg.kind != MessageKind::tool_result || !msg.parent || !session.has_message(*msg.parent)) continue;
        const auto& call = session.message(*msg.parent);
        if (!call.content.is_object() || call.content.value("tool", std::string()) != "get_app_metric") continue;
        try {
            auto result = mcp::ToolCallResult::from_json(msg.content);
            const Json* data = result.first_data();
            if (result.is_error || !data) continue;
            auto series = mcp::TimeSeries::from_json(*data);
            const auto& args = call.content["arguments"];
            auto start = parse_timestamp(args.at("start").get<std::string>());
            auto end = parse_timestamp(args.at("end").get<std::string>());
            auto stats = sim::trend_verdict(series, start, end, threshold);
            out.first = stats.verdict;
            out.second = {{"evidence", id},
                          {"app", series.app},
                          {"metric", series.metric},
                          {"polarity", std::string(mcp::to_string(series.polarity))},
                          {"start", format_timestamp(start)},
                          {"end", format_timestamp(end)},
                          {"points", stats.points},
                          {"slope", stats.slope},
                          {"mean", stats.mean},
                          {"relative_drift", stats.relative_drift},
                          {"threshold", threshold},
                          {"verdict", std::string(sim::to_string(stats.verdict))}};
        } catch (const Error&) {
        } catch (const Json::exception&) {
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(InterventionKind k) noexcept {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "pause";
}

InterventionKind parse_intervention(std::string_view name) {
    for (const auto& [kind, n] : kKindNames)
        if (n == name) return kind;
    fail(Errc::PreconditionViolation, "unknown intervention '" + std::string(name) + "'");
}

void HitlController::schedule(const std::string& agent, std::size_t step, Intervention intervention) {
    std::lock_guard lock(mutex_);
    scheduled_.emplace_back(agent, step, std::move(intervention), false);
}

void HitlController::check_and_emit(const Intervention& i) {
    const auto status = session_.status();
    bool legal = false;
    switch (i.kind) {
        case InterventionKind::pause:
        case InterventionKind::inject_guidance:
            legal = status == SessionStatus::running || status == SessionStatus::awaiting_human;
            break;
        case InterventionKind::resume: legal = status == SessionStatus::awaiting_human || pause_pending_; break;
        case InterventionKind::abort: legal = !session::is_terminal(status); break;
    }
    if (!legal)
        fail(Errc::IllegalTransition, "illegal transition from " + std::string(session::to_string(status)) + ": " +
                                          std::string(to_string(i.kind)));
    Json payload{{"intervention", std::string(to_string(i.kind))}};
    if (i.kind == InterventionKind::inject_guidance) payload["text"] = i.text;
    session_.emit({EventKind::hitl_received, std::nullopt, std::move(payload)});
    if (i.kind == InterventionKind::pause) pause_pending_ = true;
    if (i.kind == InterventionKind::resume) pause_pending_ = false;
}

void HitlController::submit(Intervention intervention) {
    std::lock_guard lock(mutex_);
    check_and_emit(intervention);
    queue_.push_back(std::move(intervention));
    cv_.notify_all();
}

void HitlController::boundary(const std::string& agent, std::size_t step) {
    std::unique_lock lock(mutex_);
    for (auto& [a, s, i, fired] : scheduled_) {
        if (fired || a != agent || s != step) continue;
        fired = true;
        check_and_emit(i);
        queue_.push_back(i);
    }
    bool paused = false;
    for (;;) {
        while (!queue_.empty()) {
            auto i = std::move(queue_.front());
            queue_.pop_front();
            switch (i.kind) {
                case InterventionKind::inject_guidance:
                    session_.append({"user", MessageKind::hitl_intervention, Json(i.text), std::nullopt, std::nullopt,
                                     {session_.group_scope_id()}});
                    break;
                case InterventionKind::pause: paused = true; break;
                case InterventionKind::resume: paused = false; break;
                case InterventionKind::abort:
                    pause_pending_ = false;
                    session_.transition(SessionStatus::cancelled);
                    fail(Errc::Cancelled, "aborted by operator at " + agent + " step " + std::to_string(step));
            }
        }
        if (!paused) break;
        if (session_.status() == SessionStatus::running) {
            session_.transition(SessionStatus::awaiting_human);
            session_.emit({EventKind::hitl_requested, agent, {{"reason", "pause"}, {"step", step}}});
        }
        cv_.wait(lock, [&] { return !queue_.empty(); });
    }
    pause_pending_ = false;
    if (session_.status() == SessionStatus::awaiting_human) session_.transition(SessionStatus::running);
}

Json SubtaskReport::to_json() const {
    return {{"subtask_id", subtask_id}, {"assignee", assignee}, {"report", report.to_json()}, {"message_id", message_id}};
}

OrchestrationPlan decompose(session::TaskSession& session, const Runtime& rt) {
    require(rt.agents && rt.policy && rt.provider, "decompose needs agents, policy and provider");
    const auto& sup = rt.agents->get(session.supervisor());
    const auto group = session.group_scope_id();
    const auto query = latest_query(session);
    std::vector<context::Snippet> snippets;
    if (rt.knowledge) snippets = rt.knowledge(query);
    auto window = context::assemble(session.visible_messages(group), *rt.policy, sup, snippets);
    if (rt.on_context) rt.on_context(sup.agent_id, window);

    std::set<std::string> workflow_ids;
    if (rt.workflows)
        for (const auto& [id, w] : *rt.workflows) workflow_ids.insert(id);
    auto closure = rt.agents->closure(sup.agent_id);
    std::string roster = "Sub-agents:";
    for (auto it = closure.begin() + 1; it != closure.end(); ++it) {
        const auto& p = rt.agents->get(*it);
        roster += "\n- " + p.agent_id + ": " + p.role_description;
    }
    roster += "\nWorkflows:";
    for (const auto& id : workflow_ids) roster += "\n- " + id;

    llm::ChatRequest request;
    request.messages.push_back({llm::Role::system, plan_grammar_text() + "\n" + roster});
    request.messages.push_back({llm::Role::user, window.render()});
    const auto cue_head = "[agent=" + sup.agent_id + " plan";
    request.messages.push_back({llm::Role::user, cue_head + "]\ntask: " + query});

    OrchestrationPlan plan;
    for (int attempt = 0;; ++attempt) {
        auto reply = rt.provider->complete(request).text;
        try {
            auto j = extract_object(reply);
            if (!j) fail(Errc::PlanGrammarError, "reply holds no JSON object");
            plan = OrchestrationPlan::from_json(*j);
            validate_plan(plan, *rt.agents, sup.agent_id, workflow_ids, rt.max_subtasks);
            break;
        } catch (const Error& e) {
            if (e.code() != Errc::PlanGrammarError || attempt > 0) throw;
            session.emit({EventKind::warning, sup.agent_id, {{"reason", "plan_repair"}, {"error", e.detail()}}});
            request.messages.push_back({llm::Role::assistant, reply});
            request.messages.push_back({llm::Role::user, "Invalid plan (" + e.detail() + "). " + plan_grammar_text() +
                                                             "\n" + cue_head + " repair]\ntask: " + query});
        }
    }
    const auto& msg = session.append({sup.agent_id, MessageKind::thought,
                                      Json{{"thought", "plan"}, {"plan", plan.to_json()}}, std::nullopt, std::nullopt,
                                      {group}});
    session.emit({EventKind::plan_created, sup.agent_id, {{"message_id", msg.message_id}, {"plan", plan.to_json()}}});
    return plan;
}

context::DistilledReport run_workflow(session::TaskSession& session, const WorkflowDef& workflow,
                                      const Json& task_fields, const Runtime& rt) {
    workflow.validate();
    const auto agent = "workflow:" + workflow.workflow_id;
    const auto scope = session.create_scope(session::ScopeMode::private_scope, {agent});
    session.emit({EventKind::agent_started, agent, {{"workflow", workflow.workflow_id}, {"scope_id", scope}}});
    std::map<std::string, Json> outputs;
    std::string report = "Workflow " + workflow.workflow_id + " ran " + std::to_string(workflow.steps.size()) + " steps.";
    for (std::size_t i = 0; i < workflow.steps.size(); ++i) {
        const auto& step = workflow.steps[i];
        if (rt.hitl) rt.hitl->boundary(agent, i + 1);
        auto args = resolve_arguments(step.arguments, task_fields, outputs);
        const auto& call = session.append({agent, MessageKind::tool_call,
                                           Json{{"thought", "workflow step " + step.step_id},
                                                {"tool", step.tool},
                                                {"arguments", args},
                                                {"step_id", step.step_id}},
                                           std::nullopt, std::nullopt, {scope}});
        const auto call_id = call.message_id;
        session.emit({EventKind::tool_call, agent,
                      {{"message_id", call_id}, {"tool", step.tool}, {"arguments", args}, {"step_id", step.step_id}}});
        mcp::ToolCallResult result;
        try {
            result = rt.tools ? rt.tools->call(step.tool, args) : mcp::ToolCallResult::error("no tool client bound");
        } catch (const Error& e) {
            result = mcp::ToolCallResult::error(e.what());
        }
        const auto& res = session.append({agent, MessageKind::tool_result, result.to_json(), call_id, std::nullopt, {scope}});
        session.emit({EventKind::tool_result, agent,
                      {{"message_id", res.message_id}, {"tool", step.tool}, {"is_error", result.is_error}, {"step_id", step.step_id}}});
        if (result.is_error) fail(Errc::StepFailed, step.step_id + ": " + result.text());
        outputs[step.step_id] = result.first_data() ? *result.first_data() : Json(result.text());
        report += "\n" + step_summary(step, result);
    }
    return context::distill(report, session.visible_messages(scope), rt.expected_findings);
}

std::vector<SubtaskReport> execute_plan(session::TaskSession& session, const OrchestrationPlan& plan, const Runtime& rt) {
    std::map<std::string, const Subtask*> by_id;
    for (const auto& s : plan.subtasks) by_id[s.subtask_id] = &s;
    std::map<std::string, SubtaskReport> done;
    std::set<std::string> broken;
    std::optional<std::pair<std::string, std::string>> first_failure;

    for (const auto& id : plan.topological_order()) {
        const auto& s = *by_id.at(id);
        if (std::any_of(s.depends_on.begin(), s.depends_on.end(), [&](const auto& d) { return broken.count(d) > 0; })) {
            broken.insert(id);
            session.emit({EventKind::warning, session.supervisor(), {{"reason", "subtask_skipped"}, {"subtask_id", id}}});
            continue;
        }
        try {
            if (s.assignee.kind == Assignee::Kind::workflow) {
                require(rt.workflows && rt.workflows->count(s.assignee.workflow_id), "unknown workflow " + s.assignee.workflow_id);
                auto report = run_workflow(session, rt.workflows->at(s.assignee.workflow_id), rt.task_fields, rt);
                done.emplace(id, publish(session, id, "workflow:" + s.assignee.workflow_id, std::move(report)));
            } else {
                std::string task = strip_blind(s.description, rt.blind_fields);
                if (!s.depends_on.empty()) {
                    task += "\nUpstream reports:";
                    for (const auto& d : s.depends_on) task += "\n" + describe_report(done.at(d));
                }
                done.emplace(id, dispatch_agent(session, rt, id, s.assignee.agent_id, s.assignee.mode, task));
            }
        } catch (const Error& e) {
            if (e.code() == Errc::Cancelled) throw;
            broken.insert(id);
            if (!first_failure) first_failure.emplace(id, e.what());
            session.emit({EventKind::warning, session.supervisor(),
                          {{"reason", "subtask_failed"}, {"subtask_id", id}, {"error", e.what()}}});
        }
    }
    if (first_failure) fail(Errc::SubtaskFailed, first_failure->first + ": " + first_failure->second);
    std::vector<SubtaskReport> out;
    for (auto& [id, r] : done) out.push_back(std::move(r));
    return out;
}

Json DualRunResult::to_json() const {
    return {{"sanitized_task", sanitized_task},
            {"analysis_scope", analysis_scope},
            {"critic_scope", critic_scope},
            {"analysis", analysis.to_json()},
            {"critic_statement", critic_statement},
            {"legacy_verdict", verdict_json(legacy_verdict)},
            {"blind_verdict", verdict_json(blind_verdict)},
            {"agreement", agreement}};
}

std::string sanitize(const std::string& task, const std::vector<std::string>& blind) {
    auto out = strip_blind(task, blind);
    for (const auto& b : blind)
        if (!b.empty() && out.find(b) != std::string::npos)
            fail(Errc::SanitizationLeak, "blind field survives sanitization: " + b);
    return out;
}

DualRunResult dual_run(session::TaskSession& session, const Runtime& rt, const std::string& task,
                       const std::string& legacy_conclusion, const std::string& analysis_agent,
                       const std::string& critic_agent) {
    require(!text::trim(legacy_conclusion).empty(), "dual run needs a legacy conclusion");
    auto blind = rt.blind_fields;
    blind.push_back(legacy_conclusion);
    DualRunResult out;
    out.sanitized_task = sanitize(task, blind);
    out.analysis = dispatch_agent(session, rt, "analysis", analysis_agent, session::ScopeMode::team, out.sanitized_task,
                                  &out.analysis_scope);

    out.critic_scope = session.create_scope(session::ScopeMode::group, {critic_agent});
    session.absorb(out.critic_scope, session.group_scope_id());
    session.absorb(out.critic_scope, out.analysis_scope);
    session.append({"user", MessageKind::observation, Json("Legacy conclusion: " + legacy_conclusion), std::nullopt,
                    std::nullopt, {out.critic_scope}});
    const auto& critic = rt.agents->get(critic_agent);
    if (critic_agent != session.supervisor()) {
        const auto& h = session.append({session.supervisor(), MessageKind::handoff,
                                        Json("Compare the blind analysis with the legacy conclusion."), std::nullopt,
                                        critic_agent, {out.critic_scope}});
        session.emit({EventKind::handoff, session.supervisor(),
                      {{"message_id", h.message_id}, {"target", critic_agent}, {"mode", "group"},
                       {"subtask_id", "critic"}, {"scope_id", out.critic_scope}}});
    }
    session.emit({EventKind::agent_started, critic_agent, {{"subtask_id", "critic"}, {"scope_id", out.critic_scope}}});
    auto run = make_run(session, rt, critic, out.critic_scope);
    auto outcome = reasoning::run_agent(run);
    if (outcome.terminal.type != reasoning::ActionType::final)
        fail(Errc::ConfigError, critic_agent + " handed off during the critic pass");
    out.critic_statement = outcome.terminal.answer;
    out.legacy_verdict = sim::stated_verdict(legacy_conclusion);
    out.blind_verdict = sim::stated_verdict(out.analysis.report.conclusion);
    if (!out.blind_verdict) {
        std::string all;
        for (const auto& f : out.analysis.report.key_findings) all += f + "\n";
        out.blind_verdict = sim::stated_verdict(all);
    }
    out.agreement = out.legacy_verdict && out.blind_verdict && *out.legacy_verdict == *out.blind_verdict;
    session.add_artifact({{"type", "dual_run"}, {"result", out.to_json()}});
    return out;
}

Json DiagnosticReport::to_json() const {
    Json reports = Json::array();
    for (const auto& r : distilled_reports) reports.push_back(r.to_json());
    return {{"session_id", session_id},
            {"preset", preset},
            {"status", status},
            {"root_cause", root_cause},
            {"handling_opinion", handling_opinion},
            {"summary", summary},
            {"verdict", verdict_json(verdict)},
            {"stated_verdict", verdict_json(stated_verdict)},
            {"trend", trend},
            {"drift_threshold", drift_threshold},
            {"evidence_pointers", Json(evidence_pointers)},
            {"distilled_reports", std::move(reports)},
            {"dual_run", dual_run ? dual_run->to_json() : Json(nullptr)},
            {"score", score ? Json(*score) : Json(nullptr)},
            {"error", error.empty() ? Json(nullptr) : Json(error)}};
}

DiagnosticReport run_preset(session::TaskSession& session, const Runtime& rt) {
    DiagnosticReport rep;
    rep.session_id = session.id();
    rep.preset = sim::preset_key(session.preset());
    rep.drift_threshold = rt.drift_threshold;
    try {
        require(rt.agents && rt.policy, "run needs agents and a context policy");
        if (session.status() == SessionStatus::pending) session.transition(SessionStatus::running);
        const auto& sup = rt.agents->get(session.supervisor());
        const auto group = session.group_scope_id();
        std::string answer;

        if (session.preset() != session::Preset::v3_multi_specialist) {
            auto lead = sup;
            lead.sub_agents.clear();
            if (rt.tools) lead.allowed_tools = rt.tools->tool_names();
            lead.reasoning_engine =
                session.preset() == session::Preset::v1_basic_react ? "react" : "sop:" + rt.phased_plan;
            auto run = make_run(session, rt, lead, group);
            auto outcome = reasoning::run_agent(run);
            if (outcome.terminal.type != reasoning::ActionType::final)
                fail(Errc::ConfigError, "single-agent presets cannot hand off");
            answer = outcome.terminal.answer;
            for (const auto& m : session.visible_messages(group))
                if (m.kind == MessageKind::tool_result) rep.evidence_pointers.push_back(m.message_id);
        } else if (rt.dual_run) {
            auto dr = dual_run(session, rt, session.root_task(), rt.dual_run->legacy_conclusion,
                               rt.dual_run->analysis_agent, rt.dual_run->critic_agent);
            rep.distilled_reports.push_back(dr.analysis);
            answer = dr.critic_statement;
            rep.dual_run = std::move(dr);
        } else {
            auto plan = decompose(session, rt);
            rep.distilled_reports = execute_plan(session, plan, rt);
            for (std::size_t round = 0;; ++round) {
                auto run = make_run(session, rt, sup, group);
                auto outcome = reasoning::run_agent(run);
                if (outcome.terminal.type == reasoning::ActionType::final) {
                    answer = outcome.terminal.answer;
                    break;
                }
                if (round >= rt.max_subtasks)
                    fail(Errc::PlanTooLarge, "supervisor exceeded " + std::to_string(rt.max_subtasks) + " ad-hoc handoffs");
                if (outcome.terminal.type != reasoning::ActionType::handoff)
                    fail(Errc::ConfigError, "supervisor ended without a final answer");
                rep.distilled_reports.push_back(dispatch_agent(session, rt, "adhoc-" + std::to_string(round + 1),
                                                               outcome.terminal.target, session::ScopeMode::team,
                                                               strip_blind(outcome.terminal.task, rt.blind_fields)));
            }
        }
        if (session.preset() == session::Preset::v3_multi_specialist) {
            std::set<std::string> seen;
            for (const auto& r : rep.distilled_reports)
                for (const auto& p : r.report.evidence_pointers)
                    if (seen.insert(p).second) rep.evidence_pointers.push_back(p);
        }

        std::tie(rep.root_cause, rep.handling_opinion) = split_answer(answer);
        rep.stated_verdict = sim::stated_verdict(answer);
        std::tie(rep.verdict, rep.trend) = evidence_verdict(session, rep.evidence_pointers, rt.drift_threshold);

        // The reporter summarizes the group view plus the evidence it cites.
        auto visible = session.visible_messages(group);
        std::set<std::string> have;
        for (const auto& m : visible) have.insert(m.message_id);
        for (const auto& p : rep.evidence_pointers)
            if (!have.count(p) && session.has_message(p)) visible.push_back(session.message(p));
        std::sort(visible.begin(), visible.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
        if (rt.hitl) rt.hitl->boundary(rt.reporter, 1);
        llm::Provider* summary_provider = nullptr;
        if (rt.agents->contains(rt.reporter) && rt.agents->get(rt.reporter).reasoning_engine == "summarizer:llm")
            summary_provider = rt.provider;
        rep.summary = reasoning::summarize_run(visible, summary_provider, rt.reporter);
        const auto& final_msg = session.append({rt.reporter, MessageKind::final_answer, Json(rep.summary), std::nullopt,
                                                std::nullopt, {group}});

        if (!rt.expected_findings.empty())
            rep.score = sim::score_report(answer + "\n" + rep.summary, rt.expected_findings);
        rep.status = "completed";
        session.emit({EventKind::final_report, rt.reporter,
                      {{"message_id", final_msg.message_id}, {"report", rep.to_json()}}});
        session.add_artifact({{"type", "diagnostic_report"}, {"report", rep.to_json()}});
        session.transition(SessionStatus::completed);
    } catch (const Error& e) {
        rep.error = e.what();
        if (e.code() == Errc::Cancelled || session.status() == SessionStatus::cancelled) {
            rep.status = "cancelled";
            return rep;
        }
        if (!session::is_terminal(session.status())) {
            session.emit({EventKind::warning, std::nullopt,
                          {{"reason", "run_failed"}, {"code", std::string(to_string(e.code()))}, {"error", e.what()}}});
            if (session.status() == SessionStatus::pending) session.transition(SessionStatus::running);
            session.transition(SessionStatus::failed);
        }
        rep.status = std::string(session::to_string(session.status()));
    }
    return rep;
}

void intervene(HitlController& hitl, Intervention intervention) { hitl.submit(std::move(intervention)); }

}  // namespace derisk::orchestrator
