#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"
#include "derisk/session/agents.hpp"
#include "derisk/session/types.hpp"

namespace derisk::context {

enum class SegmentClass {
    system_profile,
    user_query,
    final_reasoning,
    recent_turn,
    old_turn,
    tool_output,
    knowledge_snippet,
    hitl_guidance,
};

std::string_view to_string(SegmentClass c) noexcept;
SegmentClass parse_segment_class(std::string_view name);

/// Eviction rank, lowest evicted first. user_query is never evicted.
int eviction_priority(SegmentClass c) noexcept;

inline constexpr const char* kTruncationMarker = "\xE2\x80\xA6[truncated]";

struct Rule {
    enum class Kind { keep_full, truncate, summarize, drop };
    Kind kind = Kind::keep_full;
    std::size_t max_tokens = 0;  ///< truncate only

    bool operator==(const Rule&) const = default;
    static Rule keep() { return {Kind::keep_full, 0}; }
    static Rule truncate(std::size_t n) { return {Kind::truncate, n}; }
    static Rule summarize() { return {Kind::summarize, 0}; }
    static Rule drop() { return {Kind::drop, 0}; }
};

struct ContextPolicy {
    std::string name;
    std::size_t budget_tokens = 8192;
    std::size_t output_reserve_tokens = 1024;
    std::map<SegmentClass, Rule> rules;  ///< classes without a rule are kept in full
    std::size_t recent_turn_count = 6;

    std::size_t available() const noexcept { return budget_tokens - output_reserve_tokens; }
    Rule rule_for(SegmentClass c) const;

    /// InvalidPolicy: budget <= reserve, user_query not keep_full, truncate below the marker size.
    void validate() const;

    static ContextPolicy from_json(const Json& j, std::string name = {});
    Json to_json() const;
    static ContextPolicy default_policy();     ///< "default": 8192 / 1024
    static ContextPolicy aggressive_policy();  ///< "aggressive": 2048 / 512
};

/// Policies keyed by name, loaded from a JSON object {name: policy}. Always holds the two defaults.
class PolicySet {
public:
    PolicySet();
    static PolicySet load(const std::filesystem::path& path);
    static PolicySet from_json(const Json& j);
    const ContextPolicy& get(const std::string& name) const;  ///< InvalidPolicy when unknown
    std::vector<std::string> names() const;

private:
    std::map<std::string, ContextPolicy> policies_;
};

struct Segment {
    SegmentClass cls = SegmentClass::recent_turn;
    std::vector<std::string> sources;  ///< message ids or knowledge chunk ids
    std::string text;
    std::size_t token_count = 0;
    std::int64_t order = 0;  ///< age key: transcript seq of the first source
    bool condensed = false;  ///< already produced by a truncate or summarize rule

    bool operator==(const Segment&) const = default;
};

struct ContextWindow {
    std::vector<Segment> segments;
    std::size_t total_tokens = 0;
    std::vector<Segment> evicted;

    bool operator==(const ContextWindow&) const = default;
    std::string render() const;  ///< segment texts joined by blank lines
    Json to_json() const;
};

struct Snippet {
    std::string chunk_id;
    std::string text;
};

/// Builds the window for one agent from the messages visible to it.
/// Layout: system_profile, user_query, knowledge snippets, old-turn section, recent-turn section,
/// hitl_guidance. BudgetInfeasible when the user_query segments alone exceed budget - reserve.
ContextWindow assemble(const std::vector<session::Message>& visible, const ContextPolicy& policy,
                       const session::AgentProfile& profile, const std::vector<Snippet>& snippets = {});

/// Re-applies rules and the budget to an existing window. assemble's output is a fixed point.
ContextWindow refit(const ContextWindow& window, const ContextPolicy& policy);

/// Cuts at a UTF-8 boundary so the result, marker included, is at most `max_tokens`.
/// Text already within the limit is returned unchanged.
std::string truncate_to_tokens(const std::string& text, std::size_t max_tokens);

/// First and last sentence of each turn, in order, then truncated to `target_tokens`.
std::string extractive_summary(const std::vector<std::string>& turns, std::size_t target_tokens);

/// (source text, target tokens) -> summary text. Used when a summarizer engine is available.
using SummarizeFn = std::function<std::string(const std::string&, std::size_t)>;

inline constexpr std::size_t kMaxSummaryDepth = 3;

struct CompressResult {
    session::MessageDraft summary;  ///< kind summary, plain-text content
    std::vector<std::string> sources;
    std::size_t depth = 1;           ///< 1 + deepest summarized input, capped at kMaxSummaryDepth
    std::size_t target_tokens = 0;
    std::optional<std::string> warning;  ///< set when the cascade depth cap was hit
};

/// max(32, 25% of source tokens).
std::size_t compression_target(std::size_t source_tokens) noexcept;

/// PreconditionViolation on zero turns. Without `summarizer` (or when it throws) the
/// extractive fallback is used; over-long summarizer output is truncated to the target.
/// `depths` gives the depth of inputs that are themselves summaries.
CompressResult compress_history(const std::vector<session::Message>& old_turns, const std::string& sender,
                                const SummarizeFn& summarizer = nullptr,
                                const std::map<std::string, std::size_t>& depths = {});

struct DistilledReport {
    std::vector<std::string> key_findings;
    double confidence = 0.0;
    std::vector<std::string> evidence_pointers;
    std::string conclusion;

    bool operator==(const DistilledReport&) const = default;
    Json to_json() const;
    static DistilledReport from_json(const Json& j);  ///< DistillGrammarError on shape violations
};

/// Prompt text -> raw model output expected to be a DistilledReport JSON object.
using DistillFn = std::function<std::string(const std::string&)>;

/// PreconditionViolation on an empty report. With `distiller`, one repair retry is made before
/// DistillGrammarError; pointers are always restricted to ids present in `source`.
DistilledReport distill(const std::string& report, const std::vector<session::Message>& source,
                        const std::vector<std::string>& finding_labels, const DistillFn& distiller = nullptr);

}  // namespace derisk::context
