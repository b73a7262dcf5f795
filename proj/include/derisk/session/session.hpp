#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "derisk/session/agents.hpp"
#include "derisk/session/events.hpp"
#include "derisk/session/types.hpp"

namespace derisk::session {

/// One diagnostic task: append-only transcript, lifecycle, memory scopes and event stream.
///
/// Mutations come from the single owning executor. `status()` and `events()` may be read
/// from other threads.
class TaskSession {
public:
    TaskSession(std::string session_id, std::string root_task, Preset preset, std::string supervisor);

    TaskSession(const TaskSession&) = delete;
    TaskSession& operator=(const TaskSession&) = delete;

    const std::string& id() const noexcept { return session_id_; }
    const std::string& root_task() const noexcept { return root_task_; }
    Preset preset() const noexcept { return preset_; }
    const std::string& supervisor() const noexcept { return supervisor_; }
    SessionStatus status() const noexcept { return status_.load(); }

    const std::vector<Message>& transcript() const noexcept { return transcript_; }
    const Message& message(const std::string& message_id) const;  ///< InvalidReference
    bool has_message(const std::string& message_id) const;

    /// seq = max + 1; token_count filled; published per the visibility rule:
    /// (a) every scope containing the sender, (b) a handoff's recipient scopes,
    /// (c) a tool_result joins its parent's scopes, (d) explicit draft scopes,
    /// (e) user/system senders with no explicit scopes go to every group scope.
    const Message& append(MessageDraft draft);

    /// Emits status_changed. Terminal states close the event log.
    void transition(SessionStatus next);

    const std::string& group_scope_id() const noexcept { return group_scope_; }
    std::string create_scope(ScopeMode mode, std::set<std::string> members);
    void add_member(const std::string& scope_id, const std::string& agent_id);
    /// Adds everything visible in `from` to `into`.
    void absorb(const std::string& into, const std::string& from);
    const MemoryScope& scope(const std::string& scope_id) const;  ///< UnknownScope
    std::vector<std::string> scope_ids() const;

    /// Transcript filtered to the scope, in seq order.
    std::vector<Message> visible_messages(const std::string& scope_id) const;

    /// Validates message references for thought/tool_call/tool_result/handoff kinds.
    VizEvent emit(EventDraft draft);
    EventLog& events() noexcept { return *events_; }
    std::shared_ptr<EventLog> event_log() const noexcept { return events_; }

    void add_artifact(Json artifact) { artifacts_.push_back(std::move(artifact)); }
    const std::vector<Json>& artifacts() const noexcept { return artifacts_; }

    /// Canonical document: session_id, root_task, status, preset, supervisor, transcript, scopes, artifacts.
    Json snapshot() const;

private:
    std::string session_id_;
    std::string root_task_;
    Preset preset_;
    std::string supervisor_;
    std::atomic<SessionStatus> status_{SessionStatus::pending};
    std::vector<Message> transcript_;
    std::map<std::string, std::size_t> index_;  // message_id -> transcript position
    std::map<std::string, MemoryScope> scopes_;
    std::vector<std::string> scope_order_;
    std::string group_scope_;
    std::vector<Json> artifacts_;
    std::shared_ptr<EventLog> events_;
};

/// Validates inputs, then returns a pending session whose transcript holds the user_task (seq 1)
/// and whose group scope contains the supervisor.
std::shared_ptr<TaskSession> create_session(const AgentRegistry& agents, const std::string& root_task, Preset preset,
                                            const std::string& supervisor, const std::string& session_id);

/// "s-0001", "s-0002", ... per instance.
class SessionIdSource {
public:
    std::string next();

private:
    std::atomic<int> counter_{0};
};

}  // namespace derisk::session
