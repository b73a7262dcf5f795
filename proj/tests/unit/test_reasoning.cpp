#include <gtest/gtest.h>

#include "derisk/common/error.hpp"
#include "derisk/llm/scripted.hpp"
#include "derisk/mcp/monitor.hpp"
#include "derisk/reasoning/engine.hpp"
#include "support/fixtures.hpp"

using namespace derisk;
using namespace derisk::reasoning;
using derisk::session::MessageKind;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::ConfigError;
}

const char* const kMetricCall =
    R"({"thought":"fetch the curve","action":{"type":"tool_call","tool":"get_app_metric","arguments":{"app":"anonymousapp","metric":"error_rate","start":"2025-08-19T15:21:00Z","end":"2025-08-19T15:26:00Z"}}})";

/// A running session with the trend fixture behind a tool client.
struct Harness {
    session::AgentRegistry registry = session::AgentRegistry::defaults();
    std::shared_ptr<session::TaskSession> session;
    mcp::ToolClient tools;
    context::ContextPolicy policy = context::ContextPolicy::default_policy();
    std::unique_ptr<llm::ScriptedProvider> provider;
    session::AgentProfile agent;
    std::map<std::string, SopPlan> plans;

    explicit Harness(const std::string& script, const std::string& agent_id = "data-agent") {
        session = session::create_session(registry, derisk::testing::kTrendQuery, session::Preset::v1_basic_react,
                                          agent_id, "s-0001");
        session->transition(session::SessionStatus::running);
        auto store = std::make_shared<mcp::MetricStore>();
        store->add(mcp::MetricStore::read_csv(
            derisk::testing::scenarios_dir() / "trend_anonymousapp" / "fixtures" / "anonymousapp.error_rate.csv",
            "anonymousapp", "error_rate", mcp::Polarity::higher_is_worse));
        tools.add_endpoint(std::make_shared<mcp::InProcessEndpoint>(mcp::make_monitor_server(store)));
        provider = std::make_unique<llm::ScriptedProvider>(llm::parse_script(script));
        agent = registry.get(agent_id);
        plans["rca_phased"] = SopPlan::load(derisk::testing::source_dir() / "config" / "rca_phased.plan");
    }

    AgentRun run() {
        AgentRun r;
        r.session = session.get();
        r.agent = &agent;
        r.scope_id = session->group_scope_id();
        r.policy = &policy;
        r.provider = provider.get();
        r.tools = &tools;
        r.plans = &plans;
        return r;
    }

    std::vector<MessageKind> kinds() const {
        std::vector<MessageKind> out;
        for (const auto& m : session->transcript()) out.push_back(m.kind);
        return out;
    }
};

std::string line(const std::string& matcher, const std::string& response, int max_uses = 1) {
    return Json{{"matcher", matcher}, {"response", response}, {"max_uses", max_uses}}.dump() + "\n";
}

std::string final_json(const std::string& answer) {
    return Json{{"thought", "done"}, {"action", {{"type", "final"}, {"answer", answer}}}}.dump();
}

}  // namespace

TEST(ParseAction, ToolCallVariant) {
    const auto a = parse_action(std::string("Sure. ") + kMetricCall + " trailing");
    EXPECT_EQ(a.type, ActionType::tool_call);
    EXPECT_EQ(a.tool, "get_app_metric");
    EXPECT_EQ(a.arguments["app"], "anonymousapp");
    EXPECT_EQ(parse_action(a.to_json().dump()), a);
}

TEST(ParseAction, FirstWellFormedObjectWins) {
    const auto a = parse_action(R"(noise {"x":1} {"thought":"a","action":{"type":"final","answer":"worsening"}} )"
                                R"({"thought":"b","action":{"type":"final","answer":"recovering"}})");
    EXPECT_EQ(a.answer, "worsening");
    const auto b = parse_action(R"({"thought":"t","action":{"type":"handoff","target":"data-agent","task":"x {y}"}})");
    EXPECT_EQ(b.target, "data-agent");
    EXPECT_EQ(b.task, "x {y}");
}

TEST(ParseAction, MalformedOutputs) {
    for (const auto* bad : {"no json here", R"({"thought":"t"})", R"({"thought":"t","action":{"type":"dance"}})",
                            R"({"thought":"t","action":{"type":"final"}})",
                            R"({"thought":"t","action":{"type":"tool_call","tool":"x","arguments":[1]}})",
                            R"({"thought":"t","action":{"type":"handoff","target":"a"}})", "{\"thought\":"})
        EXPECT_EQ(code_of([&] { parse_action(bad); }), Errc::MalformedAction) << bad;
}

TEST(ParseAction, ToolOutsideAllowedSet) {
    session::AgentProfile p;
    p.agent_id = "fixture";
    p.allowed_tools = {"get_app_metric"};
    const auto a = parse_action(R"({"thought":"t","action":{"type":"tool_call","tool":"rm_rf","arguments":{}}})");
    EXPECT_EQ(code_of([&] { check_allowed(a, p); }), Errc::DisallowedTool);
    EXPECT_NO_THROW(check_allowed(parse_action(kMetricCall), p));
}

TEST(EngineKind, Parsing) {
    EXPECT_EQ(EngineKind::parse("react").kind, EngineKind::Kind::react);
    const auto sop = EngineKind::parse("sop:rca_phased");
    EXPECT_EQ(sop.kind, EngineKind::Kind::sop);
    EXPECT_EQ(sop.plan, "rca_phased");
    EXPECT_EQ(code_of([] { EngineKind::parse("sop:"); }), Errc::ConfigError);
    EXPECT_EQ(code_of([] { EngineKind::parse("magic"); }), Errc::ConfigError);
}

TEST(ReactRun, FinalImmediately) {
    Harness h(line("agent=data-agent phase=- step=1]", final_json("recovering")));
    auto run = h.run();
    const auto out = react_run(run);
    EXPECT_EQ(out.terminal.type, ActionType::final);
    EXPECT_EQ(out.terminal.answer, "recovering");
    EXPECT_EQ(h.kinds(), (std::vector<MessageKind>{MessageKind::user_task, MessageKind::thought}));
}

TEST(ReactRun, ThreeStepScriptCountsKinds) {
    Harness h(line("step=1]", kMetricCall) + line("step=2]", kMetricCall) + line("step=3]", final_json("worsening")));
    auto run = h.run();
    const auto out = react_run(run);
    EXPECT_EQ(out.steps, 3u);
    EXPECT_EQ(h.kinds(), (std::vector<MessageKind>{MessageKind::user_task, MessageKind::tool_call,
                                                   MessageKind::tool_result, MessageKind::tool_call,
                                                   MessageKind::tool_result, MessageKind::thought}));
    const auto& t = h.session->transcript();
    EXPECT_EQ(t[2].parent, t[1].message_id);
    const auto result = mcp::ToolCallResult::from_json(t[2].content);
    ASSERT_FALSE(result.is_error);
    EXPECT_EQ((*result.first_data())["points"].size(), 21u);
    // events reference the fused message and the result
    std::vector<std::string> kinds;
    for (const auto& e : h.session->events().after(0)) kinds.push_back(std::string(session::to_string(e.kind)));
    EXPECT_EQ(kinds, (std::vector<std::string>{"status_changed", "thought", "tool_call", "tool_result", "thought",
                                               "tool_call", "tool_result", "thought"}));
}

TEST(ReactRun, StepLimitAtTwentyFive) {
    Harness h(Json{{"matcher", "agent=data-agent"}, {"response", kMetricCall}, {"max_uses", "unlimited"}}.dump());
    auto run = h.run();
    EXPECT_EQ(code_of([&] { react_run(run); }), Errc::StepLimitExceeded);
    EXPECT_EQ(h.provider->calls(), 25u);
}

TEST(ReactStep, AppendsOneToThreeMessages) {
    Harness h(line("step=1]", kMetricCall) + line("step=2]", final_json("worsening")));
    auto run = h.run();
    for (std::size_t step = 1; step <= 2; ++step) {
        const auto before = h.session->transcript().size();
        StepFrame f;
        f.step = step;
        const auto r = react_step(run, f);
        const auto added = h.session->transcript().size() - before;
        EXPECT_GE(added, 1u);
        EXPECT_LE(added, 3u);
        EXPECT_EQ(r.appended.size(), added);
    }
}

TEST(ReactStep, RepairRetryThenSuccess) {
    Harness h(line("step=1]", "I think it is worsening") + line("step=1 repair]", final_json("worsening")));
    auto run = h.run();
    StepFrame f;
    const auto r = react_step(run, f);
    EXPECT_TRUE(r.repaired);
    EXPECT_EQ(r.action.answer, "worsening");
    const auto events = h.session->events().after(0);
    EXPECT_EQ(events[1].kind, session::EventKind::warning);
}

TEST(ReactStep, RepairFailsTwice) {
    Harness h(line("step=1", "garbage", 2));
    auto run = h.run();
    EXPECT_EQ(code_of([&] { react_step(run, StepFrame{}); }), Errc::MalformedAction);
    EXPECT_EQ(h.provider->calls(), 2u);
}

TEST(ReactStep, DisallowedToolAfterRetry) {
    const auto rm = R"({"thought":"t","action":{"type":"tool_call","tool":"rm_rf","arguments":{}}})";
    Harness h(line("step=1", rm, 2));
    auto run = h.run();
    EXPECT_EQ(code_of([&] { react_step(run, StepFrame{}); }), Errc::DisallowedTool);
}

TEST(ReactStep, ToolErrorBecomesErrorResult) {
    const auto bad_window =
        R"({"thought":"t","action":{"type":"tool_call","tool":"get_app_metric","arguments":{"app":"anonymousapp","metric":"error_rate","start":"2025-08-19T16:00:00Z","end":"2025-08-19T15:00:00Z"}}})";
    Harness h(line("step=1]", bad_window));
    auto run = h.run();
    react_step(run, StepFrame{});
    const auto& t = h.session->transcript();
    EXPECT_TRUE(mcp::ToolCallResult::from_json(t.back().content).is_error);
}

TEST(SopRun, VisitsBothPhasesInOrder) {
    const auto complete = R"({"thought":"located","action":{"type":"phase_complete"}})";
    Harness h(line("phase=Root Cause Analysis step=1]", kMetricCall) +
              line("phase=Root Cause Analysis step=2]", complete) +
              line("phase=Internal Cause Analysis step=1]", final_json("worsening")));
    auto run = h.run();
    const auto out = sop_run(run, h.plans.at("rca_phased"));
    EXPECT_EQ(out.phases, (std::vector<std::string>{"Root Cause Analysis", "Internal Cause Analysis"}));
    EXPECT_EQ(out.terminal.answer, "worsening");
    std::vector<std::int64_t> indices;
    for (const auto& e : h.session->events().after(0))
        if (e.kind == session::EventKind::agent_started) indices.push_back(e.payload["phase_index"].get<std::int64_t>());
    EXPECT_EQ(indices, (std::vector<std::int64_t>{0, 1}));
}

TEST(SopRun, PhaseCompleteEachPhaseIsTwoSteps) {
    const auto complete = R"({"thought":"ok","action":{"type":"phase_complete"}})";
    auto plan = SopPlan::load(derisk::testing::source_dir() / "config" / "rca_phased.plan");
    plan.phases[1].allowed_variants.insert(ActionType::phase_complete);
    Harness h(line("step=1]", complete, 2));
    auto run = h.run();
    const auto out = sop_run(run, plan);
    EXPECT_EQ(out.steps, 2u);
    EXPECT_EQ(out.terminal.type, ActionType::final);
}

TEST(SopRun, FinalInFirstPhaseIsDisallowedVariant) {
    Harness h(line("phase=Root Cause Analysis step=1", final_json("worsening"), 2));
    auto run = h.run();
    EXPECT_EQ(code_of([&] { sop_run(run, h.plans.at("rca_phased")); }), Errc::DisallowedVariant);
}

TEST(SopRun, PhaseStepLimit) {
    auto plan = SopPlan::load(derisk::testing::source_dir() / "config" / "rca_phased.plan");
    plan.phases[0].max_steps = 3;
    Harness h(Json{{"matcher", "phase=Root Cause Analysis"}, {"response", kMetricCall}, {"max_uses", "unlimited"}}.dump());
    auto run = h.run();
    EXPECT_EQ(code_of([&] { sop_run(run, plan); }), Errc::PhaseStepLimit);
    EXPECT_EQ(h.provider->calls(), 3u);
}

TEST(SopPlan, ValidationAndShippedPlan) {
    const auto plan = SopPlan::load(derisk::testing::source_dir() / "config" / "rca_phased.plan");
    ASSERT_EQ(plan.phases.size(), 2u);
    EXPECT_EQ(plan.phases[0].name, "Root Cause Analysis");
    EXPECT_EQ(plan.phases[1].name, "Internal Cause Analysis");
    EXPECT_EQ(SopPlan::from_json(plan.to_json()).to_json(), plan.to_json());
    EXPECT_EQ(code_of([] { SopPlan::from_json({{"phases", Json::array()}}); }), Errc::ConfigError);
    EXPECT_EQ(code_of([] {
                  SopPlan::from_json({{"phases", {{{"name", "p"}, {"allowed_variants", {"tool_call"}}}}}});
              }),
              Errc::ConfigError);
}

TEST(Summarize, FallbackTemplateOverTrendRun) {
    Harness h(line("step=1]", kMetricCall) + line("step=2]", final_json("worsening")));
    auto run = h.run();
    react_run(run);
    const auto report = summarize_run(h.session->transcript(), nullptr);
    EXPECT_EQ(report,
              std::string("Task: ") + derisk::testing::kTrendQuery +
                  "\nFindings:\n- get_app_metric: anonymousapp/error_rate 21 points, 0.031 -> 0.053\n"
                  "Answer: worsening");
}

TEST(Summarize, EmptyTranscriptAndScriptedProvider) {
    EXPECT_EQ(code_of([] { summarize_run({}, nullptr); }), Errc::PreconditionViolation);
    Harness h(line("agent=report-agent summarize]", "Root cause: config push. Verdict: worsening."));
    EXPECT_EQ(summarize_run(h.session->transcript(), h.provider.get(), "report-agent"),
              "Root cause: config push. Verdict: worsening.");
}

TEST(RunAgent, DispatchesOnEngineKind) {
    Harness h("", "report-agent");
    auto run = h.run();
    const auto out = run_agent(run);
    EXPECT_EQ(out.terminal.type, ActionType::final);
    EXPECT_NE(out.terminal.answer.find("Task: "), std::string::npos);
    EXPECT_EQ(h.provider->calls(), 0u);

    h.agent.reasoning_engine = "rl_dynamic";
    EXPECT_EQ(code_of([&] { run_agent(run); }), Errc::NotImplemented);
    h.agent.reasoning_engine = "sop:missing";
    EXPECT_EQ(code_of([&] { run_agent(run); }), Errc::ConfigError);
}

TEST(ReactStep, EnginesNeverChangeScopes) {
    Harness h(line("step=1]", kMetricCall) +
              line("step=2]", R"({"thought":"delegate","action":{"type":"handoff","target":"code-agent","task":"x"}})"));
    const auto before = h.session->scope_ids();
    auto run = h.run();
    const auto out = react_run(run);
    EXPECT_EQ(out.terminal.type, ActionType::handoff);
    EXPECT_EQ(h.session->scope_ids(), before);
    for (const auto& m : h.session->transcript()) EXPECT_NE(m.kind, MessageKind::handoff);
}
