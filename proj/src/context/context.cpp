#include "derisk/context/context.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/llm/tokens.hpp"

namespace derisk::context {
namespace {

using session::Message;
using session::MessageKind;

constexpr std::size_t kMarkerBytes = 14;
static_assert(sizeof("\xE2\x80\xA6[truncated]") - 1 == kMarkerBytes);
constexpr std::size_t kMinTruncateTokens = (kMarkerBytes + 3) / 4;

const std::vector<std::pair<SegmentClass, std::string_view>> kClassNames{
    {SegmentClass::system_profile, "system_profile"}, {SegmentClass::user_query, "user_query"},
    {SegmentClass::final_reasoning, "final_reasoning"}, {SegmentClass::recent_turn, "recent_turn"},
    {SegmentClass::old_turn, "old_turn"},             {SegmentClass::tool_output, "tool_output"},
    {SegmentClass::knowledge_snippet, "knowledge_snippet"}, {SegmentClass::hitl_guidance, "hitl_guidance"},
};

Segment make_segment(SegmentClass cls, std::vector<std::string> sources, std::string body, std::int64_t order) {
    Segment s;
    s.cls = cls;
    s.sources = std::move(sources);
    s.text = std::move(body);
    s.token_count = llm::count_tokens(s.text);
    s.order = order;
    return s;
}

std::string turn_text(const Message& m) {
    return "[" + m.sender + " " + std::string(session::to_string(m.kind)) + "] " + m.text();
}

std::string profile_text(const session::AgentProfile& p) {
    std::string out = "You are " + (p.display_name.empty() ? p.agent_id : p.display_name) + ".";
    if (!p.role_description.empty()) out += " " + p.role_description;
    if (!p.system_prompt.empty()) out += "\n" + p.system_prompt;
    return out;
}

std::size_t total_of(const std::vector<Segment>& segments) {
    std::size_t total = 0;
    for (const auto& s : segments) total += s.token_count;
    return total;
}

/// Applies the per-class rules in place, preserving segment order.
void apply_rules(std::vector<Segment>& segments, const ContextPolicy& policy) {
    std::vector<Segment> out;
    std::optional<std::size_t> collapsed_at;  // position of the old-turn summary in `out`
    std::vector<Segment> collapsing;
    for (auto& seg : segments) {
        const auto rule = policy.rule_for(seg.cls);
        switch (rule.kind) {
            case Rule::Kind::keep_full: out.push_back(std::move(seg)); break;
            case Rule::Kind::drop: break;
            case Rule::Kind::truncate:
                if (seg.token_count > rule.max_tokens) {
                    seg.text = truncate_to_tokens(seg.text, rule.max_tokens);
                    seg.token_count = llm::count_tokens(seg.text);
                    seg.condensed = true;
                }
                out.push_back(std::move(seg));
                break;
            case Rule::Kind::summarize:
                if (seg.condensed) {
                    out.push_back(std::move(seg));
                } else if (seg.cls == SegmentClass::old_turn) {
                    if (!collapsed_at) {
                        collapsed_at = out.size();
                        out.emplace_back();
                    }
                    collapsing.push_back(std::move(seg));
                } else {
                    seg.text = extractive_summary({seg.text}, compression_target(seg.token_count));
                    seg.token_count = llm::count_tokens(seg.text);
                    seg.condensed = true;
                    out.push_back(std::move(seg));
                }
                break;
        }
    }
    if (collapsed_at) {
        std::vector<std::string> texts;
        std::vector<std::string> sources;
        std::size_t tokens = 0;
        for (const auto& s : collapsing) {
            texts.push_back(s.text);
            sources.insert(sources.end(), s.sources.begin(), s.sources.end());
            tokens += s.token_count;
        }
        auto summary = make_segment(SegmentClass::old_turn, std::move(sources),
                                    extractive_summary(texts, compression_target(tokens)), collapsing.front().order);
        summary.condensed = true;
        out[*collapsed_at] = std::move(summary);
    }
    std::erase_if(out, [](const Segment& s) { return s.token_count == 0; });
    segments = std::move(out);
}

ContextWindow fit(std::vector<Segment> segments, const ContextPolicy& policy, std::vector<Segment> evicted) {
    apply_rules(segments, policy);
    const auto available = policy.available();
    std::size_t query = 0;
    for (const auto& s : segments)
        if (s.cls == SegmentClass::user_query) query += s.token_count;
    if (query > available)
        fail(Errc::BudgetInfeasible, "user query needs " + std::to_string(query) + " tokens, " +
                                         std::to_string(available) + " available");

    auto total = total_of(segments);
    while (total > available) {
        std::optional<std::size_t> victim;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const auto& s = segments[i];
            if (s.cls == SegmentClass::user_query) continue;
            if (!victim) {
                victim = i;
                continue;
            }
            const auto& v = segments[*victim];
            const auto key = std::make_tuple(eviction_priority(s.cls), s.order, i);
            const auto best = std::make_tuple(eviction_priority(v.cls), v.order, *victim);
            if (key < best) victim = i;
        }
        total -= segments[*victim].token_count;
        evicted.push_back(std::move(segments[*victim]));
        segments.erase(segments.begin() + static_cast<std::ptrdiff_t>(*victim));
    }
    ContextWindow w;
    w.segments = std::move(segments);
    w.total_tokens = total;
    w.evicted = std::move(evicted);
    return w;
}

Rule rule_from_json(const Json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "keep_full") return Rule::keep();
        if (s == "summarize") return Rule::summarize();
        if (s == "drop") return Rule::drop();
        fail(Errc::InvalidPolicy, "unknown strategy '" + s + "'");
    }
    if (j.is_object() && j.size() == 1 && j.contains("truncate") && j["truncate"].is_number_integer() &&
        j["truncate"].get<long long>() > 0)
        return Rule::truncate(j["truncate"].get<std::size_t>());
    fail(Errc::InvalidPolicy, "strategy must be keep_full, summarize, drop or {\"truncate\": n}");
}

Json rule_to_json(const Rule& r) {
    switch (r.kind) {
        case Rule::Kind::keep_full: return "keep_full";
        case Rule::Kind::summarize: return "summarize";
        case Rule::Kind::drop: return "drop";
        case Rule::Kind::truncate: return Json{{"truncate", r.max_tokens}};
    }
    return nullptr;
}

std::optional<Json> extract_object(const std::string& raw) {
    const auto open = raw.find('{');
    const auto close = raw.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
    try {
        auto j = Json::parse(raw.substr(open, close - open + 1));
        if (j.is_object()) return j;
    } catch (const Json::parse_error&) {
    }
    return std::nullopt;
}

}  // namespace

std::string_view to_string(SegmentClass c) noexcept {
    for (const auto& [k, name] : kClassNames)
        if (k == c) return name;
    return "unknown";
}

SegmentClass parse_segment_class(std::string_view name) {
    for (const auto& [k, n] : kClassNames)
        if (n == name) return k;
    fail(Errc::InvalidPolicy, "unknown segment class '" + std::string(name) + "'");
}

int eviction_priority(SegmentClass c) noexcept {
    switch (c) {
        case SegmentClass::old_turn: return 0;
        case SegmentClass::tool_output: return 1;
        case SegmentClass::knowledge_snippet: return 2;
        case SegmentClass::recent_turn: return 3;
        case SegmentClass::hitl_guidance: return 4;
        case SegmentClass::final_reasoning: return 5;
        case SegmentClass::system_profile: return 6;
        case SegmentClass::user_query: return 7;
    }
    return 7;
}

Rule ContextPolicy::rule_for(SegmentClass c) const {
    auto it = rules.find(c);
    return it == rules.end() ? Rule::keep() : it->second;
}

void ContextPolicy::validate() const {
    if (budget_tokens == 0) fail(Errc::InvalidPolicy, "budget_tokens must be positive");
    if (budget_tokens <= output_reserve_tokens)
        fail(Errc::InvalidPolicy, "budget_tokens must exceed output_reserve_tokens");
    if (rule_for(SegmentClass::user_query).kind != Rule::Kind::keep_full)
        fail(Errc::InvalidPolicy, "user_query must be keep_full");
    for (const auto& [cls, rule] : rules)
        if (rule.kind == Rule::Kind::truncate && rule.max_tokens < kMinTruncateTokens)
            fail(Errc::InvalidPolicy, std::string(to_string(cls)) + ": truncate needs at least " +
                                          std::to_string(kMinTruncateTokens) + " tokens");
}

ContextPolicy ContextPolicy::from_json(const Json& j, std::string name) {
    if (!j.is_object()) fail(Errc::InvalidPolicy, "policy must be an object");
    ContextPolicy p;
    p.name = std::move(name);
    try {
        p.budget_tokens = j.value("budget_tokens", p.budget_tokens);
        p.output_reserve_tokens = j.value("output_reserve_tokens", p.output_reserve_tokens);
        p.recent_turn_count = j.value("recent_turn_count", p.recent_turn_count);
    } catch (const Json::exception& e) {
        fail(Errc::InvalidPolicy, std::string("bad numeric field: ") + e.what());
    }
    if (j.contains("rules")) {
        if (!j["rules"].is_object()) fail(Errc::InvalidPolicy, "rules must be an object");
        for (const auto& [cls, rule] : j["rules"].items()) p.rules[parse_segment_class(cls)] = rule_from_json(rule);
    }
    p.validate();
    return p;
}

Json ContextPolicy::to_json() const {
    Json j;
    j["budget_tokens"] = budget_tokens;
    j["output_reserve_tokens"] = output_reserve_tokens;
    j["recent_turn_count"] = recent_turn_count;
    Json r = Json::object();
    for (const auto& [cls, rule] : rules) r[std::string(to_string(cls))] = rule_to_json(rule);
    j["rules"] = std::move(r);
    return j;
}

ContextPolicy ContextPolicy::default_policy() {
    ContextPolicy p;
    p.name = "default";
    p.budget_tokens = 8192;
    p.output_reserve_tokens = 1024;
    p.recent_turn_count = 6;
    p.rules = {{SegmentClass::old_turn, Rule::summarize()},
               {SegmentClass::tool_output, Rule::truncate(512)},
               {SegmentClass::knowledge_snippet, Rule::truncate(256)}};
    return p;
}

ContextPolicy ContextPolicy::aggressive_policy() {
    ContextPolicy p;
    p.name = "aggressive";
    p.budget_tokens = 2048;
    p.output_reserve_tokens = 512;
    p.recent_turn_count = 4;
    p.rules = {{SegmentClass::old_turn, Rule::summarize()},
               {SegmentClass::tool_output, Rule::truncate(128)},
               {SegmentClass::knowledge_snippet, Rule::truncate(96)},
               {SegmentClass::recent_turn, Rule::truncate(256)}};
    return p;
}

PolicySet::PolicySet() {
    policies_["default"] = ContextPolicy::default_policy();
    policies_["aggressive"] = ContextPolicy::aggressive_policy();
}

PolicySet PolicySet::from_json(const Json& j) {
    if (!j.is_object()) fail(Errc::InvalidPolicy, "policy file must be an object keyed by policy name");
    PolicySet set;
    for (const auto& [name, body] : j.items()) set.policies_[name] = ContextPolicy::from_json(body, name);
    return set;
}

PolicySet PolicySet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::InvalidPolicy, "cannot open " + path.string());
    try {
        return from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        fail(Errc::InvalidPolicy, path.string() + ": " + e.what());
    }
}

const ContextPolicy& PolicySet::get(const std::string& name) const {
    auto it = policies_.find(name);
    if (it == policies_.end()) fail(Errc::InvalidPolicy, "unknown policy '" + name + "'");
    return it->second;
}

std::vector<std::string> PolicySet::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : policies_) out.push_back(k);
    return out;
}

std::string ContextWindow::render() const {
    std::string out;
    for (const auto& s : segments) {
        if (!out.empty()) out += "\n\n";
        out += s.text;
    }
    return out;
}

Json ContextWindow::to_json() const {
    Json segs = Json::array();
    for (const auto& s : segments)
        segs.push_back({{"class", std::string(to_string(s.cls))},
                        {"sources", s.sources},
                        {"token_count", s.token_count},
                        {"text", s.text}});
    Json ev = Json::array();
    for (const auto& s : evicted) ev.push_back({{"class", std::string(to_string(s.cls))}, {"sources", s.sources}});
    return {{"total_tokens", total_tokens}, {"segments", std::move(segs)}, {"evicted", std::move(ev)}};
}

ContextWindow assemble(const std::vector<Message>& visible, const ContextPolicy& policy,
                       const session::AgentProfile& profile, const std::vector<Snippet>& snippets) {
    policy.validate();
    const auto& me = profile.agent_id;

    std::optional<std::string> latest_thought;
    for (const auto& m : visible)
        if (m.kind == MessageKind::thought && m.sender == me) latest_thought = m.message_id;

    auto is_query = [&](const Message& m) {
        return m.kind == MessageKind::user_task || (m.kind == MessageKind::handoff && m.recipient == me);
    };

    std::vector<Segment> queries, knowledge, old_section, recent_section, guidance;
    std::vector<const Message*> turns;
    for (const auto& m : visible) {
        if (is_query(m)) {
            auto body = m.kind == MessageKind::user_task ? m.text() : "[handoff from " + m.sender + "] " + m.text();
            queries.push_back(make_segment(SegmentClass::user_query, {m.message_id}, std::move(body), m.seq));
        } else if (m.kind == MessageKind::hitl_intervention) {
            guidance.push_back(make_segment(SegmentClass::hitl_guidance, {m.message_id}, turn_text(m), m.seq));
        } else {
            turns.push_back(&m);
        }
    }
    const auto recent_from = turns.size() > policy.recent_turn_count ? turns.size() - policy.recent_turn_count : 0;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& m = *turns[i];
        const bool recent = i >= recent_from;
        SegmentClass cls = recent ? SegmentClass::recent_turn : SegmentClass::old_turn;
        if (m.kind == MessageKind::tool_result) {
            cls = SegmentClass::tool_output;
        } else if (m.kind == MessageKind::report || m.kind == MessageKind::final_answer ||
                   (latest_thought && m.message_id == *latest_thought)) {
            cls = SegmentClass::final_reasoning;
        }
        auto seg = make_segment(cls, {m.message_id}, turn_text(m), m.seq);
        if (m.kind == MessageKind::summary) {
            seg.cls = SegmentClass::old_turn;
            seg.condensed = true;
            old_section.push_back(std::move(seg));
        } else {
            (recent ? recent_section : old_section).push_back(std::move(seg));
        }
    }
    // summaries lead the old-turn section
    std::stable_partition(old_section.begin(), old_section.end(), [](const Segment& s) { return s.condensed; });
    for (std::size_t i = 0; i < snippets.size(); ++i)
        knowledge.push_back(make_segment(SegmentClass::knowledge_snippet, {snippets[i].chunk_id},
                                         "[" + snippets[i].chunk_id + "] " + snippets[i].text,
                                         static_cast<std::int64_t>(i)));

    std::vector<Segment> segments;
    segments.push_back(make_segment(SegmentClass::system_profile, {}, profile_text(profile), 0));
    for (auto* part : {&queries, &knowledge, &old_section, &recent_section, &guidance})
        for (auto& s : *part) segments.push_back(std::move(s));
    return fit(std::move(segments), policy, {});
}

ContextWindow refit(const ContextWindow& window, const ContextPolicy& policy) {
    policy.validate();
    return fit(window.segments, policy, window.evicted);
}

std::string truncate_to_tokens(const std::string& body, std::size_t max_tokens) {
    if (llm::count_tokens(body) <= max_tokens) return body;
    if (max_tokens < kMinTruncateTokens) return {};
    const auto keep = text::utf8_floor(body, max_tokens * 4 - kMarkerBytes);
    return body.substr(0, keep) + kTruncationMarker;
}

std::string extractive_summary(const std::vector<std::string>& turns, std::size_t target_tokens) {
    std::string out;
    for (const auto& t : turns) {
        const auto parts = text::sentences(t);
        if (parts.empty()) continue;
        if (!out.empty()) out += " ";
        out += parts.front();
        if (parts.size() > 1) out += " " + parts.back();
    }
    return truncate_to_tokens(out, target_tokens);
}

std::size_t compression_target(std::size_t source_tokens) noexcept {
    return std::max<std::size_t>(32, source_tokens / 4);
}

CompressResult compress_history(const std::vector<Message>& old_turns, const std::string& sender,
                                const SummarizeFn& summarizer, const std::map<std::string, std::size_t>& depths) {
    if (old_turns.empty()) fail(Errc::PreconditionViolation, "compress_history needs at least one turn");
    CompressResult r;
    std::vector<std::string> texts;
    std::size_t source_tokens = 0;
    std::size_t deepest = 0;
    for (const auto& m : old_turns) {
        texts.push_back(m.text());
        source_tokens += llm::count_tokens(texts.back());
        r.sources.push_back(m.message_id);
        if (auto it = depths.find(m.message_id); it != depths.end()) deepest = std::max(deepest, it->second);
    }
    r.target_tokens = compression_target(source_tokens);
    r.depth = deepest + 1;
    if (r.depth > kMaxSummaryDepth) {
        r.depth = kMaxSummaryDepth;
        r.warning = "summary cascade depth capped at " + std::to_string(kMaxSummaryDepth);
    }

    std::string body;
    if (summarizer) {
        std::string joined;
        for (const auto& t : texts) joined += t + "\n";
        try {
            body = truncate_to_tokens(text::trim(summarizer(joined, r.target_tokens)), r.target_tokens);
        } catch (const Error&) {
            body.clear();
        }
    }
    if (body.empty()) body = extractive_summary(texts, r.target_tokens);
    r.summary.sender = sender;
    r.summary.kind = MessageKind::summary;
    r.summary.content = body;
    return r;
}

Json DistilledReport::to_json() const {
    return {{"key_findings", key_findings},
            {"confidence", confidence},
            {"evidence_pointers", evidence_pointers},
            {"conclusion", conclusion}};
}

DistilledReport DistilledReport::from_json(const Json& j) {
    auto bad = [](const std::string& what) -> DistilledReport { fail(Errc::DistillGrammarError, what); };
    if (!j.is_object()) return bad("report must be an object");
    DistilledReport r;
    const auto kf = j.find("key_findings");
    if (kf == j.end() || !kf->is_array() || kf->empty()) return bad("key_findings must be a nonempty array");
    for (const auto& f : *kf) {
        if (!f.is_string()) return bad("key_findings entries must be strings");
        r.key_findings.push_back(f.get<std::string>());
    }
    const auto c = j.find("confidence");
    if (c == j.end() || !c->is_number()) return bad("confidence must be a number");
    r.confidence = std::clamp(c->get<double>(), 0.0, 1.0);
    const auto ev = j.find("evidence_pointers");
    if (ev == j.end() || !ev->is_array()) return bad("evidence_pointers must be an array");
    for (const auto& e : *ev) {
        if (!e.is_string()) return bad("evidence_pointers entries must be strings");
        r.evidence_pointers.push_back(e.get<std::string>());
    }
    const auto con = j.find("conclusion");
    if (con == j.end() || !con->is_string()) return bad("conclusion must be a string");
    r.conclusion = con->get<std::string>();
    return r;
}

DistilledReport distill(const std::string& report, const std::vector<Message>& source,
                        const std::vector<std::string>& finding_labels, const DistillFn& distiller) {
    if (text::trim(report).empty()) fail(Errc::PreconditionViolation, "distill needs a non-empty report");
    std::vector<std::string> tool_results;
    std::set<std::string> known;
    for (const auto& m : source) {
        known.insert(m.message_id);
        if (m.kind == MessageKind::tool_result) tool_results.push_back(m.message_id);
    }

    DistilledReport r;
    if (distiller) {
        std::string prompt =
            "Distill the report into JSON {\"key_findings\":[str],\"confidence\":num,\"evidence_pointers\":[id],"
            "\"conclusion\":str}.\nEvidence ids:";
        for (const auto& id : tool_results) prompt += " " + id;
        prompt += "\nReport:\n" + report;
        std::string problem;
        for (int attempt = 0; attempt < 2; ++attempt) {
            const auto raw = distiller(attempt == 0 ? prompt : prompt + "\nPrevious output was invalid: " + problem);
            const auto j = extract_object(raw);
            if (!j) {
                problem = "no JSON object found";
                continue;
            }
            try {
                r = DistilledReport::from_json(*j);
                problem.clear();
                break;
            } catch (const Error& e) {
                problem = e.detail();
            }
        }
        if (!problem.empty()) fail(Errc::DistillGrammarError, problem);
        std::erase_if(r.evidence_pointers, [&](const std::string& id) { return !known.count(id); });
    } else {
        const auto parts = text::sentences(report);
        r.conclusion = parts.empty() ? text::trim(report) : parts.back();
        std::size_t matched = 0;
        for (const auto& label : finding_labels)
            if (text::contains_ci(report, label)) ++matched;
        r.confidence = finding_labels.empty() ? 0.0 : static_cast<double>(matched) / finding_labels.size();
        for (const auto& s : parts)
            for (const auto& label : finding_labels)
                if (text::contains_ci(s, label)) {
                    r.key_findings.push_back(s);
                    break;
                }
        if (r.key_findings.empty()) r.key_findings.push_back(r.conclusion);
        r.evidence_pointers = tool_results;
    }
    if (r.evidence_pointers.empty()) r.evidence_pointers = tool_results;
    return r;
}

}  // namespace derisk::context
