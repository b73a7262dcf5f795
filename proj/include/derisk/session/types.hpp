#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"

namespace derisk::session {

enum class MessageKind {
    user_task,
    thought,
    action,
    tool_call,
    tool_result,
    observation,
    handoff,
    report,
    hitl_intervention,
    final_answer,
    summary,
};

enum class SessionStatus { pending, running, awaiting_human, completed, failed, cancelled };

enum class Preset { v1_basic_react, v2_phased, v3_multi_specialist };

enum class ScopeMode { private_scope, team, group };

std::string_view to_string(MessageKind kind) noexcept;
std::string_view to_string(SessionStatus status) noexcept;
std::string_view to_string(Preset preset) noexcept;
std::string_view to_string(ScopeMode mode) noexcept;

MessageKind parse_message_kind(std::string_view name);
SessionStatus parse_status(std::string_view name);
/// Accepts the full names and the short forms v1/v2/v3. Throws ConfigError otherwise.
Preset parse_preset(std::string_view name);
ScopeMode parse_scope_mode(std::string_view name);

bool is_terminal(SessionStatus status) noexcept;
bool is_legal_transition(SessionStatus from, SessionStatus to) noexcept;

inline constexpr const char* kUserSender = "user";
inline constexpr const char* kSystemSender = "system";

struct Message {
    std::string message_id;
    std::string session_id;
    std::string sender;
    MessageKind kind = MessageKind::thought;
    Json content;  ///< text or structured payload
    std::size_t token_count = 0;
    std::int64_t seq = 0;
    std::optional<std::string> parent;
    std::optional<std::string> recipient;  ///< handoff target

    std::string text() const { return payload_text(content); }
    Json to_json() const;
};

/// What a caller hands to append(); the session fills id, seq and token_count.
struct MessageDraft {
    std::string sender;
    MessageKind kind = MessageKind::thought;
    Json content;
    std::optional<std::string> parent;
    std::optional<std::string> recipient;
    /// Extra scopes to publish into. Team/private scopes only accept members' messages
    /// (or a handoff addressed to a member).
    std::vector<std::string> scopes;
};

struct MemoryScope {
    std::string scope_id;
    ScopeMode mode = ScopeMode::group;
    std::set<std::string> members;
    std::set<std::string> visible;  ///< message ids
};

}  // namespace derisk::session
