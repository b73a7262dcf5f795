#include "derisk/session/session.hpp"

#include <cstdio>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/llm/tokens.hpp"

namespace derisk::session {

namespace {

std::string message_id_for(const std::string& session_id, std::int64_t seq) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "m%04lld", static_cast<long long>(seq));
    return session_id + "/" + buf;
}

bool is_agent_sender(const std::string& sender) { return sender != kUserSender && sender != kSystemSender; }

}  // namespace

TaskSession::TaskSession(std::string session_id, std::string root_task, Preset preset, std::string supervisor)
    : session_id_(std::move(session_id)),
      root_task_(std::move(root_task)),
      preset_(preset),
      supervisor_(std::move(supervisor)),
      events_(std::make_shared<EventLog>(session_id_)) {
    group_scope_ = create_scope(ScopeMode::group, {supervisor_});
}

const Message& TaskSession::message(const std::string& message_id) const {
    auto it = index_.find(message_id);
    if (it == index_.end()) fail(Errc::InvalidReference, "no message " + message_id);
    return transcript_[it->second];
}

bool TaskSession::has_message(const std::string& message_id) const { return index_.count(message_id) != 0; }

const Message& TaskSession::append(MessageDraft draft) {
    if (is_terminal(status())) fail(Errc::SessionClosed, session_id_ + " is " + std::string(to_string(status())));

    const Message* parent = nullptr;
    if (draft.parent) {
        auto it = index_.find(*draft.parent);
        if (it != index_.end()) parent = &transcript_[it->second];
        else if (draft.kind != MessageKind::tool_result) fail(Errc::InvalidReference, "unknown parent " + *draft.parent);
    }
    if (draft.kind == MessageKind::tool_result && (!parent || parent->kind != MessageKind::tool_call))
        fail(Errc::OrphanToolResult, "tool_result needs a tool_call parent");

    std::set<std::string> targets;
    if (is_agent_sender(draft.sender)) {
        for (const auto& [id, scope] : scopes_)
            if (scope.members.count(draft.sender)) targets.insert(id);
    }
    if (draft.kind == MessageKind::handoff && draft.recipient) {
        for (const auto& [id, scope] : scopes_)
            if (scope.members.count(*draft.recipient)) targets.insert(id);
    }
    if (draft.kind == MessageKind::tool_result && parent) {
        for (const auto& [id, scope] : scopes_)
            if (scope.visible.count(parent->message_id)) targets.insert(id);
    }
    for (const auto& id : draft.scopes) {
        const auto& sc = scope(id);
        if (sc.mode != ScopeMode::group && !sc.members.count(draft.sender)) {
            const bool addressed = draft.kind == MessageKind::handoff && draft.recipient && sc.members.count(*draft.recipient);
            if (!addressed) fail(Errc::ScopeViolation, draft.sender + " is not a member of " + id);
        }
        targets.insert(id);
    }
    if (!is_agent_sender(draft.sender) && draft.scopes.empty()) {
        for (const auto& [id, sc] : scopes_)
            if (sc.mode == ScopeMode::group) targets.insert(id);
    }

    Message m;
    m.seq = transcript_.empty() ? 1 : transcript_.back().seq + 1;
    m.session_id = session_id_;
    m.message_id = message_id_for(session_id_, m.seq);
    m.sender = std::move(draft.sender);
    m.kind = draft.kind;
    m.content = std::move(draft.content);
    m.token_count = llm::count_tokens(payload_text(m.content));
    m.parent = std::move(draft.parent);
    m.recipient = std::move(draft.recipient);

    for (const auto& id : targets) scopes_.at(id).visible.insert(m.message_id);
    index_.emplace(m.message_id, transcript_.size());
    transcript_.push_back(std::move(m));
    return transcript_.back();
}

void TaskSession::transition(SessionStatus next) {
    const auto current = status();
    if (!is_legal_transition(current, next))
        fail(Errc::IllegalTransition,
             "illegal transition from " + std::string(to_string(current)) + " to " + std::string(to_string(next)));
    status_.store(next);
    EventDraft d;
    d.kind = EventKind::status_changed;
    d.payload = {{"from", std::string(to_string(current))}, {"to", std::string(to_string(next))}};
    events_->append(std::move(d));
    if (is_terminal(next)) events_->close();
}

std::string TaskSession::create_scope(ScopeMode mode, std::set<std::string> members) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "scope-%02zu", scope_order_.size() + 1);
    MemoryScope sc;
    sc.scope_id = buf;
    sc.mode = mode;
    sc.members = std::move(members);
    scope_order_.push_back(sc.scope_id);
    auto id = sc.scope_id;
    scopes_.emplace(id, std::move(sc));
    return id;
}

void TaskSession::add_member(const std::string& scope_id, const std::string& agent_id) {
    auto it = scopes_.find(scope_id);
    if (it == scopes_.end()) fail(Errc::UnknownScope, scope_id);
    it->second.members.insert(agent_id);
}

void TaskSession::absorb(const std::string& into, const std::string& from) {
    const auto& source = scope(from);
    auto it = scopes_.find(into);
    if (it == scopes_.end()) fail(Errc::UnknownScope, into);
    it->second.visible.insert(source.visible.begin(), source.visible.end());
}

const MemoryScope& TaskSession::scope(const std::string& scope_id) const {
    auto it = scopes_.find(scope_id);
    if (it == scopes_.end()) fail(Errc::UnknownScope, scope_id);
    return it->second;
}

std::vector<std::string> TaskSession::scope_ids() const { return scope_order_; }

std::vector<Message> TaskSession::visible_messages(const std::string& scope_id) const {
    const auto& sc = scope(scope_id);
    std::vector<Message> out;
    for (const auto& m : transcript_)
        if (sc.visible.count(m.message_id)) out.push_back(m);
    return out;
}

VizEvent TaskSession::emit(EventDraft draft) {
    if (references_message(draft.kind)) {
        if (!draft.payload.is_object() || !draft.payload.contains("message_id") ||
            !draft.payload["message_id"].is_string() || !has_message(draft.payload["message_id"].get<std::string>()))
            fail(Errc::InvalidReference,
                 std::string(to_string(draft.kind)) + " event must reference an existing message_id");
    }
    return events_->append(std::move(draft));
}

Json TaskSession::snapshot() const {
    Json j;
    j["session_id"] = session_id_;
    j["root_task"] = root_task_;
    j["status"] = std::string(to_string(status()));
    j["preset"] = std::string(to_string(preset_));
    j["supervisor"] = supervisor_;
    j["transcript"] = Json::array();
    for (const auto& m : transcript_) j["transcript"].push_back(m.to_json());
    j["scopes"] = Json::array();
    for (const auto& id : scope_order_) {
        const auto& sc = scopes_.at(id);
        Json s;
        s["scope_id"] = sc.scope_id;
        s["mode"] = std::string(to_string(sc.mode));
        s["members"] = sc.members;
        s["visible"] = sc.visible;
        j["scopes"].push_back(std::move(s));
    }
    j["artifacts"] = artifacts_;
    return j;
}

std::shared_ptr<TaskSession> create_session(const AgentRegistry& agents, const std::string& root_task, Preset preset,
                                            const std::string& supervisor, const std::string& session_id) {
    if (!agents.contains(supervisor)) fail(Errc::UnknownAgent, supervisor);
    if (text::trim(root_task).empty()) fail(Errc::EmptyTask, "root task is empty");
    auto s = std::make_shared<TaskSession>(session_id, root_task, preset, supervisor);
    MessageDraft d;
    d.sender = kUserSender;
    d.kind = MessageKind::user_task;
    d.content = root_task;
    s->append(std::move(d));
    return s;
}

std::string SessionIdSource::next() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s-%04d", ++counter_);
    return buf;
}

}  // namespace derisk::session
