#include "derisk/session/events.hpp"

#include "derisk/common/error.hpp"
#include "derisk/common/time.hpp"

namespace derisk::session {

namespace {
constexpr std::pair<EventKind, std::string_view> kEventNames[] = {
    {EventKind::status_changed, "status_changed"}, {EventKind::plan_created, "plan_created"},
    {EventKind::agent_started, "agent_started"},   {EventKind::thought, "thought"},
    {EventKind::tool_call, "tool_call"},           {EventKind::tool_result, "tool_result"},
    {EventKind::handoff, "handoff"},               {EventKind::report_distilled, "report_distilled"},
    {EventKind::hitl_requested, "hitl_requested"}, {EventKind::hitl_received, "hitl_received"},
    {EventKind::final_report, "final_report"},     {EventKind::warning, "warning"},
};
}  // namespace

std::string_view to_string(EventKind kind) noexcept {
    for (const auto& [k, name] : kEventNames)
        if (k == kind) return name;
    return "warning";
}

EventKind parse_event_kind(std::string_view name) {
    for (const auto& [k, n] : kEventNames)
        if (n == name) return k;
    fail(Errc::PreconditionViolation, "unknown event kind '" + std::string(name) + "'");
}

bool references_message(EventKind kind) noexcept {
    return kind == EventKind::thought || kind == EventKind::tool_call || kind == EventKind::tool_result ||
           kind == EventKind::handoff;
}

Json VizEvent::to_json() const {
    Json j;
    j["seq"] = seq;
    j["session_id"] = session_id;
    j["kind"] = std::string(to_string(kind));
    j["agent_id"] = agent_id ? Json(*agent_id) : Json(nullptr);
    j["payload"] = payload;
    j["ts"] = ts;
    return j;
}

VizEvent VizEvent::from_json(const Json& j) {
    VizEvent e;
    e.seq = j.at("seq").get<std::int64_t>();
    e.session_id = j.at("session_id").get<std::string>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    if (j.contains("agent_id") && j["agent_id"].is_string()) e.agent_id = j["agent_id"].get<std::string>();
    e.payload = j.value("payload", Json::object());
    e.ts = j.value("ts", std::string());
    return e;
}

VizEvent EventLog::append(EventDraft draft) {
    std::lock_guard lock(mutex_);
    if (closed_) fail(Errc::SessionClosed, "event stream of " + session_id_ + " is closed");
    VizEvent e;
    e.seq = static_cast<std::int64_t>(events_.size()) + 1;
    e.session_id = session_id_;
    e.kind = draft.kind;
    e.agent_id = std::move(draft.agent_id);
    e.payload = std::move(draft.payload);
    e.ts = now_iso8601_millis();
    events_.push_back(e);
    cv_.notify_all();
    return e;
}

std::vector<VizEvent> EventLog::after(std::int64_t seq) const {
    std::lock_guard lock(mutex_);
    const auto from = static_cast<std::size_t>(std::max<std::int64_t>(seq, 0));
    if (from >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(from), events_.end()};
}

std::vector<VizEvent> EventLog::wait_after(std::int64_t seq, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    const auto from = static_cast<std::size_t>(std::max<std::int64_t>(seq, 0));
    cv_.wait_for(lock, timeout, [&] { return events_.size() > from || closed_; });
    if (from >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(from), events_.end()};
}

void EventLog::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    cv_.notify_all();
}

bool EventLog::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::int64_t EventLog::last_seq() const {
    std::lock_guard lock(mutex_);
    return static_cast<std::int64_t>(events_.size());
}

}  // namespace derisk::session
