#include "derisk/session/types.hpp"

#include <utility>

#include "derisk/common/error.hpp"

namespace derisk::session {

namespace {

constexpr std::pair<MessageKind, std::string_view> kKinds[] = {
    {MessageKind::user_task, "user_task"},
    {MessageKind::thought, "thought"},
    {MessageKind::action, "action"},
    {MessageKind::tool_call, "tool_call"},
    {MessageKind::tool_result, "tool_result"},
    {MessageKind::observation, "observation"},
    {MessageKind::handoff, "handoff"},
    {MessageKind::report, "report"},
    {MessageKind::hitl_intervention, "hitl_intervention"},
    {MessageKind::final_answer, "final_answer"},
    {MessageKind::summary, "summary"},
};

constexpr std::pair<SessionStatus, std::string_view> kStatuses[] = {
    {SessionStatus::pending, "pending"},     {SessionStatus::running, "running"},
    {SessionStatus::awaiting_human, "awaiting_human"}, {SessionStatus::completed, "completed"},
    {SessionStatus::failed, "failed"},       {SessionStatus::cancelled, "cancelled"},
};

}  // namespace

std::string_view to_string(MessageKind kind) noexcept {
    for (const auto& [k, n] : kKinds)
        if (k == kind) return n;
    return "thought";
}

std::string_view to_string(SessionStatus status) noexcept {
    for (const auto& [s, n] : kStatuses)
        if (s == status) return n;
    return "pending";
}

std::string_view to_string(Preset preset) noexcept {
    switch (preset) {
        case Preset::v1_basic_react: return "v1_basic_react";
        case Preset::v2_phased: return "v2_phased";
        case Preset::v3_multi_specialist: return "v3_multi_specialist";
    }
    return "v1_basic_react";
}

std::string_view to_string(ScopeMode mode) noexcept {
    switch (mode) {
        case ScopeMode::private_scope: return "private";
        case ScopeMode::team: return "team";
        case ScopeMode::group: return "group";
    }
    return "group";
}

MessageKind parse_message_kind(std::string_view name) {
    for (const auto& [k, n] : kKinds)
        if (n == name) return k;
    fail(Errc::PreconditionViolation, "unknown message kind '" + std::string(name) + "'");
}

SessionStatus parse_status(std::string_view name) {
    for (const auto& [s, n] : kStatuses)
        if (n == name) return s;
    fail(Errc::PreconditionViolation, "unknown status '" + std::string(name) + "'");
}

Preset parse_preset(std::string_view name) {
    if (name == "v1" || name == "v1_basic_react") return Preset::v1_basic_react;
    if (name == "v2" || name == "v2_phased") return Preset::v2_phased;
    if (name == "v3" || name == "v3_multi_specialist") return Preset::v3_multi_specialist;
    fail(Errc::ConfigError, "unknown preset '" + std::string(name) + "'");
}

ScopeMode parse_scope_mode(std::string_view name) {
    if (name == "private") return ScopeMode::private_scope;
    if (name == "team") return ScopeMode::team;
    if (name == "group") return ScopeMode::group;
    fail(Errc::ConfigError, "unknown collaboration mode '" + std::string(name) + "'");
}

bool is_terminal(SessionStatus s) noexcept {
    return s == SessionStatus::completed || s == SessionStatus::failed || s == SessionStatus::cancelled;
}

bool is_legal_transition(SessionStatus from, SessionStatus to) noexcept {
    using S = SessionStatus;
    switch (from) {
        case S::pending: return to == S::running;
        case S::running:
            return to == S::awaiting_human || to == S::completed || to == S::failed || to == S::cancelled;
        case S::awaiting_human: return to == S::running || to == S::cancelled;
        default: return false;
    }
}

Json Message::to_json() const {
    Json j;
    j["message_id"] = message_id;
    j["session_id"] = session_id;
    j["seq"] = seq;
    j["sender"] = sender;
    j["kind"] = std::string(to_string(kind));
    j["content"] = content;
    j["token_count"] = token_count;
    j["parent"] = parent ? Json(*parent) : Json(nullptr);
    j["recipient"] = recipient ? Json(*recipient) : Json(nullptr);
    return j;
}

}  // namespace derisk::session
