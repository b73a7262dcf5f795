#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/context/context.hpp"
#include "derisk/llm/tokens.hpp"
#include "derisk/session/session.hpp"
#include "support/fixtures.hpp"

using namespace derisk;
using namespace derisk::context;
using derisk::session::Message;
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

Message msg(std::int64_t seq, std::string sender, MessageKind kind, std::string body,
            std::optional<std::string> recipient = std::nullopt) {
    Message m;
    m.message_id = "s-0001/m" + std::to_string(1000 + seq);
    m.session_id = "s-0001";
    m.sender = std::move(sender);
    m.kind = kind;
    m.content = std::move(body);
    m.token_count = llm::count_tokens(m.text());
    m.seq = seq;
    m.recipient = std::move(recipient);
    return m;
}

session::AgentProfile agent(const std::string& id = "data-agent") {
    session::AgentProfile p;
    p.agent_id = id;
    p.display_name = "Data Agent";
    p.role_description = "Analyzes metric curves.";
    return p;
}

ContextPolicy keep_all(std::size_t budget, std::size_t reserve, std::size_t recent) {
    ContextPolicy p;
    p.name = "test";
    p.budget_tokens = budget;
    p.output_reserve_tokens = reserve;
    p.recent_turn_count = recent;
    return p;
}

std::string words(std::mt19937& rng, std::size_t n) {
    static const std::vector<std::string> vocab{"error", "rate", "rose", "pods", "restart", "config",
                                                "timeout", "deploy", "worsening", "latency", "db", "é"};
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += rng() % 7 == 0 ? ". " : " ";
        out += vocab[rng() % vocab.size()];
    }
    return out + ".";
}

std::vector<Message> six_message_transcript() {
    return {
        msg(1, "user", MessageKind::user_task, "Is the error rate worsening or recovering?"),
        msg(2, "data-agent", MessageKind::thought, "I will fetch the error rate for the window first."),
        msg(3, "data-agent", MessageKind::tool_call, "{\"tool\":\"get_app_metric\"}"),
        msg(4, "data-agent", MessageKind::tool_result,
            "21 points from 0.031 rising to 0.053 with small oscillations along the way."),
        msg(5, "data-agent", MessageKind::thought, "The slope is positive and the drift exceeds five percent."),
        msg(6, "data-agent", MessageKind::thought, "Conclusion: worsening."),
    };
}

}  // namespace

TEST(Policy, DefaultsAndValidation) {
    const auto d = ContextPolicy::default_policy();
    EXPECT_EQ(d.budget_tokens, 8192u);
    EXPECT_EQ(d.output_reserve_tokens, 1024u);
    EXPECT_EQ(ContextPolicy::aggressive_policy().budget_tokens, 2048u);
    EXPECT_NO_THROW(d.validate());
    auto bad = d;
    bad.output_reserve_tokens = bad.budget_tokens;
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::InvalidPolicy);
    bad = d;
    bad.rules[SegmentClass::user_query] = Rule::truncate(100);
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::InvalidPolicy);
    bad = d;
    bad.rules[SegmentClass::tool_output] = Rule::truncate(3);
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::InvalidPolicy);
}

TEST(Policy, JsonRoundTripAndShippedFile) {
    const auto d = ContextPolicy::default_policy();
    auto back = ContextPolicy::from_json(d.to_json(), "default");
    EXPECT_EQ(back.to_json(), d.to_json());
    EXPECT_EQ(code_of([] { ContextPolicy::from_json({{"rules", {{"nonsense", "drop"}}}}); }), Errc::InvalidPolicy);
    EXPECT_EQ(code_of([] { ContextPolicy::from_json({{"rules", {{"old_turn", "shrink"}}}}); }), Errc::InvalidPolicy);
    const auto set = PolicySet::load(derisk::testing::source_dir() / "config" / "policies.json");
    EXPECT_EQ(set.get("default").budget_tokens, 8192u);
    EXPECT_EQ(set.get("aggressive").budget_tokens, 2048u);
    EXPECT_EQ(code_of([&] { set.get("missing"); }), Errc::InvalidPolicy);
}

TEST(Truncate, MarkerAndUtf8Boundary) {
    const std::string marker = kTruncationMarker;
    EXPECT_EQ(marker.size(), 14u);
    EXPECT_EQ(truncate_to_tokens("short", 10), "short");
    std::string accents;
    for (int i = 0; i < 100; ++i) accents += "\xC3\xA9";  // 200 bytes of two-byte code points
    for (std::size_t max = 4; max < 50; ++max) {
        const auto t = truncate_to_tokens(accents, max);
        EXPECT_LE(llm::count_tokens(t), max);
        ASSERT_GE(t.size(), marker.size());
        EXPECT_EQ(t.substr(t.size() - marker.size()), marker);
        const auto body = t.substr(0, t.size() - marker.size());
        EXPECT_EQ(body.size() % 2, 0u) << "cut inside a code point at max=" << max;
        EXPECT_EQ(truncate_to_tokens(t, max), t);
    }
}

TEST(Assemble, EverythingFitsVerbatim) {
    const auto transcript = six_message_transcript();
    const auto w = assemble(transcript, keep_all(8192, 1024, 6), agent());
    EXPECT_TRUE(w.evicted.empty());
    const auto rendered = w.render();
    for (const auto& m : transcript) EXPECT_NE(rendered.find(m.text()), std::string::npos) << m.text();
    std::size_t sum = 0;
    for (const auto& s : w.segments) sum += s.token_count;
    EXPECT_EQ(w.total_tokens, sum);
    EXPECT_LE(w.total_tokens, 8192u - 1024u);
}

TEST(Assemble, LayoutOrder) {
    std::vector<Message> t{
        msg(1, "user", MessageKind::user_task, "task"),
        msg(2, "sre-agent", MessageKind::thought, "old one"),
        msg(3, "user", MessageKind::hitl_intervention, "check config first"),
        msg(4, "sre-agent", MessageKind::handoff, "analyze metric", "data-agent"),
        msg(5, "data-agent", MessageKind::thought, "recent thought"),
        msg(6, "data-agent", MessageKind::thought, "latest thought"),
    };
    const auto w = assemble(t, keep_all(8192, 1024, 2), agent(), {{"doc#sem-0001", "runbook text"}});
    std::vector<SegmentClass> classes;
    for (const auto& s : w.segments) classes.push_back(s.cls);
    EXPECT_EQ(classes, (std::vector<SegmentClass>{SegmentClass::system_profile, SegmentClass::user_query,
                                                  SegmentClass::user_query, SegmentClass::knowledge_snippet,
                                                  SegmentClass::old_turn, SegmentClass::recent_turn,
                                                  SegmentClass::final_reasoning, SegmentClass::hitl_guidance}));
    EXPECT_EQ(w.segments[1].text, "task");
}

// Enumerates every eviction order over the evictable segments of a 6-message transcript and
// checks the engine keeps exactly the survivors of the priority-lexicographic smallest order.
TEST(Assemble, EvictionMatchesBruteForceOrder) {
    const auto transcript = six_message_transcript();
    const auto full = assemble(transcript, keep_all(100000, 1, 3), agent());
    std::vector<std::size_t> evictable;
    std::size_t query_tokens = 0;
    for (std::size_t i = 0; i < full.segments.size(); ++i) {
        if (full.segments[i].cls == SegmentClass::user_query) query_tokens += full.segments[i].token_count;
        else evictable.push_back(i);
    }
    ASSERT_EQ(evictable.size(), 6u);

    for (std::size_t available = query_tokens; available <= full.total_tokens; ++available) {
        std::vector<std::pair<int, std::int64_t>> best_seq;
        std::set<std::size_t> best_removed;
        bool have = false;
        auto perm = evictable;
        std::sort(perm.begin(), perm.end());
        do {
            std::size_t total = full.total_tokens;
            std::vector<std::pair<int, std::int64_t>> seq;
            std::set<std::size_t> removed;
            for (auto idx : perm) {
                if (total <= available) break;
                total -= full.segments[idx].token_count;
                seq.emplace_back(eviction_priority(full.segments[idx].cls), full.segments[idx].order);
                removed.insert(idx);
            }
            if (!have || seq < best_seq) {
                best_seq = seq;
                best_removed = removed;
                have = true;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));

        const auto w = assemble(transcript, keep_all(available + 1, 1, 3), agent());
        std::vector<Segment> expect;
        for (std::size_t i = 0; i < full.segments.size(); ++i)
            if (!best_removed.count(i)) expect.push_back(full.segments[i]);
        ASSERT_EQ(w.segments, expect) << "available=" << available;
        const auto query = std::find_if(w.segments.begin(), w.segments.end(),
                                        [](const Segment& s) { return s.cls == SegmentClass::user_query; });
        ASSERT_NE(query, w.segments.end());
        EXPECT_EQ(query->text, transcript[0].text());
    }
}

TEST(Assemble, OversizedQueryIsInfeasible) {
    std::vector<Message> t{msg(1, "user", MessageKind::user_task, std::string(40000, 'q'))};
    EXPECT_EQ(code_of([&] { assemble(t, keep_all(1000, 100, 6), agent()); }), Errc::BudgetInfeasible);
}

TEST(Assemble, RulesApply) {
    auto t = six_message_transcript();
    t[3].content = std::string(4000, 'x');
    auto p = keep_all(8192, 1024, 2);
    p.rules[SegmentClass::tool_output] = Rule::truncate(50);
    p.rules[SegmentClass::old_turn] = Rule::summarize();
    const auto w = assemble(t, p, agent());
    for (const auto& s : w.segments) {
        if (s.cls == SegmentClass::tool_output) {
            EXPECT_LE(s.token_count, 50u);
            EXPECT_NE(s.text.find(kTruncationMarker), std::string::npos);
        }
    }
    // the two old turns (seq 2 and 3) collapse into one summary segment
    std::size_t old_segments = 0;
    for (const auto& s : w.segments)
        if (s.cls == SegmentClass::old_turn) {
            ++old_segments;
            EXPECT_EQ(s.sources.size(), 2u);
        }
    EXPECT_EQ(old_segments, 1u);
    EXPECT_EQ(refit(w, p), w);
}

TEST(Assemble, RandomizedBudgetProperties) {
    std::mt19937 rng(8675309);
    const std::vector<MessageKind> kinds{MessageKind::thought, MessageKind::tool_call, MessageKind::tool_result,
                                         MessageKind::observation, MessageKind::hitl_intervention,
                                         MessageKind::report, MessageKind::summary, MessageKind::handoff};
    const std::vector<Rule> rules{Rule::keep(), Rule::truncate(4), Rule::truncate(20), Rule::truncate(100),
                                  Rule::summarize(), Rule::drop()};
    const std::vector<SegmentClass> configurable{SegmentClass::system_profile, SegmentClass::final_reasoning,
                                                 SegmentClass::recent_turn,    SegmentClass::old_turn,
                                                 SegmentClass::tool_output,    SegmentClass::knowledge_snippet,
                                                 SegmentClass::hitl_guidance};
    int feasible = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Message> t{msg(1, "user", MessageKind::user_task, words(rng, 1 + rng() % 40))};
        const auto n = rng() % 25;
        for (std::size_t i = 0; i < n; ++i) {
            const auto kind = kinds[rng() % kinds.size()];
            const auto sender = rng() % 2 ? "data-agent" : "sre-agent";
            t.push_back(msg(static_cast<std::int64_t>(i + 2), sender, kind, words(rng, 1 + rng() % 120),
                            kind == MessageKind::handoff ? std::optional<std::string>("data-agent") : std::nullopt));
        }
        std::vector<Snippet> snippets;
        for (std::size_t i = 0, k = rng() % 4; i < k; ++i)
            snippets.push_back({"doc#sem-000" + std::to_string(i), words(rng, 1 + rng() % 80)});

        auto p = keep_all(64 + rng() % 3000, 0, rng() % 8);
        p.output_reserve_tokens = rng() % (p.budget_tokens / 2);
        for (auto cls : configurable)
            if (rng() % 2) p.rules[cls] = rules[rng() % rules.size()];

        std::size_t query_tokens = 0;
        std::string query_text;
        for (const auto& m : t)
            if (m.kind == MessageKind::user_task) query_text = m.text();
        ContextWindow w;
        try {
            w = assemble(t, p, agent(), snippets);
        } catch (const Error& e) {
            ASSERT_EQ(e.code(), Errc::BudgetInfeasible);
            // infeasible only when the query segments alone overflow
            const auto full = assemble(t, keep_all(1000000, 0, p.recent_turn_count), agent(), snippets);
            for (const auto& s : full.segments)
                if (s.cls == SegmentClass::user_query) query_tokens += s.token_count;
            EXPECT_GT(query_tokens, p.available());
            continue;
        }
        ++feasible;
        EXPECT_LE(w.total_tokens, p.available());
        std::size_t sum = 0;
        for (const auto& s : w.segments) {
            EXPECT_GT(s.token_count, 0u);  // dropping any segment strictly lowers the total
            EXPECT_EQ(s.token_count, llm::count_tokens(s.text));
            sum += s.token_count;
        }
        EXPECT_EQ(sum, w.total_tokens);
        EXPECT_NE(w.render().find(query_text), std::string::npos);
        EXPECT_EQ(refit(w, p), w);
    }
    EXPECT_GT(feasible, 500);
}

TEST(CompressHistory, SingleTurnFallbackByHand) {
    const std::string turn =
        "Error rate rose sharply after the deploy. Pods restarted twice in five minutes. "
        "Timeouts appeared in the config service logs. Rollback should be evaluated now.";
    ASSERT_EQ(llm::count_tokens(turn), 40u);
    std::vector<Message> turns{msg(2, "data-agent", MessageKind::thought, turn)};
    const auto r = compress_history(turns, "data-agent");
    EXPECT_EQ(r.target_tokens, 32u);
    EXPECT_EQ(r.summary.content, "Error rate rose sharply after the deploy. Rollback should be evaluated now.");
    EXPECT_EQ(r.summary.kind, MessageKind::summary);
    EXPECT_LE(llm::count_tokens(r.summary.content.get<std::string>()), 32u);
    EXPECT_EQ(r.depth, 1u);
}

TEST(CompressHistory, LargeSourceMeetsQuarterTarget) {
    std::mt19937 rng(1);
    std::vector<Message> turns;
    std::size_t source = 0;
    for (int i = 0; i < 20; ++i) {
        turns.push_back(msg(i + 2, "a", MessageKind::thought, words(rng, 200)));
        source += llm::count_tokens(turns.back().text());
    }
    const auto r = compress_history(turns, "a");
    EXPECT_EQ(r.target_tokens, source / 4);
    EXPECT_LE(llm::count_tokens(r.summary.content.get<std::string>()), r.target_tokens);
    EXPECT_EQ(r.sources.size(), 20u);
}

TEST(CompressHistory, ZeroTurnsRejected) {
    EXPECT_EQ(code_of([] { compress_history({}, "a"); }), Errc::PreconditionViolation);
}

TEST(CompressHistory, SummarizerOutputUsedAndCounted) {
    std::vector<Message> turns{msg(2, "a", MessageKind::thought, "anything at all")};
    const auto r = compress_history(turns, "a", [](const std::string&, std::size_t) { return "fixed summary text"; });
    EXPECT_EQ(r.summary.content, "fixed summary text");
    const auto failing = compress_history(turns, "a", [](const std::string&, std::size_t) -> std::string {
        throw Error(Errc::NoScriptMatch, "none");
    });
    EXPECT_EQ(failing.summary.content, "anything at all");
}

TEST(CompressHistory, CascadeDepthCapped) {
    std::vector<Message> turns{msg(2, "a", MessageKind::summary, "a summary.")};
    EXPECT_EQ(compress_history(turns, "a", nullptr, {{turns[0].message_id, 1}}).depth, 2u);
    EXPECT_FALSE(compress_history(turns, "a", nullptr, {{turns[0].message_id, 2}}).warning);
    const auto capped = compress_history(turns, "a", nullptr, {{turns[0].message_id, 3}});
    EXPECT_EQ(capped.depth, 3u);
    EXPECT_TRUE(capped.warning);
}

TEST(Distill, FallbackEvidenceAndConfidence) {
    std::vector<Message> src{msg(1, "user", MessageKind::user_task, "task"),
                             msg(2, "a", MessageKind::tool_call, "call one"),
                             msg(3, "a", MessageKind::tool_result, "r1"),
                             msg(4, "a", MessageKind::tool_call, "call two"),
                             msg(5, "a", MessageKind::tool_result, "r2")};
    const auto r = distill("The error rate is rising. Drift exceeds threshold. Verdict: worsening.", src,
                           {"worsening", "config change"});
    EXPECT_EQ(r.evidence_pointers, (std::vector<std::string>{src[2].message_id, src[4].message_id}));
    EXPECT_DOUBLE_EQ(r.confidence, 0.5);
    EXPECT_EQ(r.key_findings, (std::vector<std::string>{"Verdict: worsening."}));
    EXPECT_EQ(r.conclusion, "Verdict: worsening.");

    const auto none = distill("Nothing notable here.", src, {"worsening"});
    EXPECT_DOUBLE_EQ(none.confidence, 0.0);
    EXPECT_EQ(none.key_findings, (std::vector<std::string>{"Nothing notable here."}));
    EXPECT_EQ(code_of([&] { distill("  ", src, {}); }), Errc::PreconditionViolation);
}

TEST(Distill, ProviderGoldenPayload) {
    std::vector<Message> src{msg(2, "a", MessageKind::tool_call, "c"), msg(3, "a", MessageKind::tool_result, "r")};
    const Json golden{{"key_findings", {"error rate rising 72%"}},
                      {"confidence", 0.9},
                      {"evidence_pointers", {src[1].message_id}},
                      {"conclusion", "worsening"}};
    const auto r = distill("report", src, {}, [&](const std::string&) { return "```json\n" + golden.dump() + "\n```"; });
    EXPECT_EQ(r.to_json(), golden);
}

TEST(Distill, ProviderRepairThenFailure) {
    std::vector<Message> src{msg(2, "a", MessageKind::tool_call, "c"), msg(3, "a", MessageKind::tool_result, "r")};
    int calls = 0;
    const auto repaired = distill("report", src, {}, [&](const std::string& prompt) -> std::string {
        if (++calls == 1) return "not json";
        EXPECT_NE(prompt.find("invalid"), std::string::npos);
        return R"({"key_findings":["k"],"confidence":7,"evidence_pointers":["s-9/m1"],"conclusion":"c"})";
    });
    EXPECT_EQ(calls, 2);
    EXPECT_DOUBLE_EQ(repaired.confidence, 1.0);
    // fabricated pointer dropped, real evidence substituted
    EXPECT_EQ(repaired.evidence_pointers, (std::vector<std::string>{src[1].message_id}));
    calls = 0;
    EXPECT_EQ(code_of([&] {
                  distill("report", src, {}, [&](const std::string&) {
                      ++calls;
                      return std::string(R"({"key_findings":[],"confidence":1,"evidence_pointers":[],"conclusion":""})");
                  });
              }),
              Errc::DistillGrammarError);
    EXPECT_EQ(calls, 2);
}

TEST(Distill, PointersNeverFabricated) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Message> src;
        std::set<std::string> ids;
        for (int i = 0, n = 1 + rng() % 10; i < n; ++i) {
            src.push_back(msg(i + 1, "a", rng() % 2 ? MessageKind::tool_result : MessageKind::thought, "x"));
            ids.insert(src.back().message_id);
        }
        Json out{{"key_findings", {"k"}}, {"confidence", 0.5}, {"evidence_pointers", Json::array()}, {"conclusion", "c"}};
        for (int i = 0; i < 4; ++i) out["evidence_pointers"].push_back("s-0001/m" + std::to_string(1000 + rng() % 20));
        const auto r = distill("report.", src, {}, [&](const std::string&) { return out.dump(); });
        for (const auto& p : r.evidence_pointers) EXPECT_TRUE(ids.count(p)) << p;
        const bool has_result = std::any_of(src.begin(), src.end(),
                                            [](const Message& m) { return m.kind == MessageKind::tool_result; });
        if (has_result) EXPECT_FALSE(r.evidence_pointers.empty());
    }
}
