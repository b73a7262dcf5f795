#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"

namespace derisk::session {

enum class EventKind {
    status_changed,
    plan_created,
    agent_started,
    thought,
    tool_call,
    tool_result,
    handoff,
    report_distilled,
    hitl_requested,
    hitl_received,
    final_report,
    warning,
};

std::string_view to_string(EventKind kind) noexcept;
EventKind parse_event_kind(std::string_view name);

/// True for kinds whose payload must carry the message_id of an existing transcript message.
bool references_message(EventKind kind) noexcept;

struct VizEvent {
    std::int64_t seq = 0;
    std::string session_id;
    EventKind kind = EventKind::warning;
    std::optional<std::string> agent_id;
    Json payload = Json::object();
    std::string ts;

    /// Field order: seq, session_id, kind, agent_id, payload, ts.
    Json to_json() const;
    static VizEvent from_json(const Json& j);
};

struct EventDraft {
    EventKind kind = EventKind::warning;
    std::optional<std::string> agent_id;
    Json payload = Json::object();
};

/// Append-only, per-session event buffer. Producers never block on readers; readers copy out
/// under the lock and may wait for new events.
class EventLog {
public:
    explicit EventLog(std::string session_id) : session_id_(std::move(session_id)) {}

    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    VizEvent append(EventDraft draft);

    std::vector<VizEvent> after(std::int64_t seq) const;

    /// Events with seq > `seq`; waits up to `timeout` when none are buffered yet.
    /// Returns empty on timeout or when the log is closed and drained.
    std::vector<VizEvent> wait_after(std::int64_t seq, std::chrono::milliseconds timeout) const;

    void close();
    bool closed() const;
    std::int64_t last_seq() const;
    const std::string& session_id() const noexcept { return session_id_; }

private:
    std::string session_id_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<VizEvent> events_;
    bool closed_ = false;
};

}  // namespace derisk::session
