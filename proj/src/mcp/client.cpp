#include "derisk/mcp/client.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "derisk/common/error.hpp"

extern char** environ;

namespace derisk::mcp {

std::string InProcessEndpoint::exchange(const std::string& frame) {
    auto reply = server_->handle_line(frame);
    return reply ? *reply : std::string();
}

StdioEndpoint::StdioEndpoint(std::vector<std::string> argv) : argv_(std::move(argv)) {
    if (argv_.empty()) fail(Errc::TransportError, "stdio endpoint needs a command");
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) fail(Errc::TransportError, std::strerror(errno));

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, in_pipe[1]);
    posix_spawn_file_actions_addclose(&actions, out_pipe[0]);

    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    pid_t pid = -1;
    const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        fail(Errc::TransportError, "cannot spawn " + argv_[0] + ": " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    std::signal(SIGPIPE, SIG_IGN);
}

StdioEndpoint::~StdioEndpoint() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

std::string StdioEndpoint::describe() const { return "stdio:" + argv_.front(); }

std::string StdioEndpoint::exchange(const std::string& frame) {
    std::lock_guard lock(mutex_);
    std::string line = frame + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(to_child_, line.data() + written, line.size() - written);
        if (n <= 0) fail(Errc::TransportError, "write to " + argv_.front() + " failed");
        written += static_cast<std::size_t>(n);
    }
    // Notifications get no reply.
    try {
        const auto decoded = decode_frame(frame);
        if (const auto* req = std::get_if<Request>(&decoded); req && req->is_notification()) return {};
    } catch (const FrameError&) {
    }
    for (;;) {
        if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
            auto out = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return out;
        }
        char chunk[4096];
        const auto n = ::read(from_child_, chunk, sizeof chunk);
        if (n <= 0) fail(Errc::TransportError, argv_.front() + " closed its output");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

HttpEndpoint::HttpEndpoint(std::string base_url, std::string path, int timeout_ms)
    : base_url_(std::move(base_url)), path_(std::move(path)), timeout_ms_(timeout_ms) {}

std::string HttpEndpoint::exchange(const std::string& frame) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    auto res = client.Post(path_, frame, "application/json");
    if (!res) fail(Errc::TransportError, describe() + ": " + httplib::to_string(res.error()));
    if (res->status == 204) return {};
    if (res->status != 200) fail(Errc::TransportError, describe() + ": HTTP " + std::to_string(res->status));
    return res->body;
}

namespace {

Json round_trip(Endpoint& endpoint, const std::string& method, Json params) {
    Request req;
    req.id = Json(endpoint.next_id());
    req.method = method;
    req.params = std::move(params);
    const auto wire = endpoint.exchange(encode_frame(req));
    Frame frame;
    try {
        frame = decode_frame(wire);
    } catch (const FrameError& e) {
        fail(Errc::TransportError, endpoint.describe() + " sent an undecodable frame: " + e.detail());
    }
    const auto* resp = std::get_if<Response>(&frame);
    if (!resp) fail(Errc::TransportError, endpoint.describe() + " answered with a request");
    if (resp->id != *req.id) fail(Errc::TransportError, endpoint.describe() + " answered with a different id");
    if (resp->error) throw FrameError(Errc::ProtocolError, resp->error->code, resp->error->message);
    return *resp->result;
}

}  // namespace

std::vector<ToolDescriptor> list_tools(Endpoint& endpoint) {
    const auto result = round_trip(endpoint, "tools/list", Json::object());
    std::vector<ToolDescriptor> out;
    try {
        for (const auto& t : result.at("tools")) out.push_back(ToolDescriptor::from_json(t, endpoint.describe()));
    } catch (const Json::exception& e) {
        fail(Errc::TransportError, std::string("malformed tools/list result: ") + e.what());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

ToolCallResult call_tool(Endpoint& endpoint, const std::string& tool, const Json& arguments) {
    Json params;
    params["name"] = tool;
    params["arguments"] = arguments;
    return ToolCallResult::from_json(round_trip(endpoint, "tools/call", std::move(params)));
}

void ToolClient::add_endpoint(std::shared_ptr<Endpoint> endpoint) {
    auto listed = list_tools(*endpoint);
    std::lock_guard lock(mutex_);
    std::set<std::string> seen;
    for (const auto& d : listed) {
        if (routes_.count(d.name) || !seen.insert(d.name).second)
            fail(Errc::DuplicateTool, d.name + " is already provided");
    }
    for (auto& d : listed) {
        auto name = d.name;
        routes_.emplace(std::move(name), std::make_pair(std::move(d), endpoint));
    }
    endpoints_.push_back(std::move(endpoint));
}

std::vector<ToolDescriptor> ToolClient::tools() const {
    std::lock_guard lock(mutex_);
    std::vector<ToolDescriptor> out;
    for (const auto& [_, route] : routes_) out.push_back(route.first);
    return out;
}

std::set<std::string> ToolClient::tool_names() const {
    std::lock_guard lock(mutex_);
    std::set<std::string> out;
    for (const auto& [name, _] : routes_) out.insert(name);
    return out;
}

std::optional<ToolDescriptor> ToolClient::find(const std::string& tool) const {
    std::lock_guard lock(mutex_);
    auto it = routes_.find(tool);
    if (it == routes_.end()) return std::nullopt;
    return it->second.first;
}

ToolCallResult ToolClient::call(const std::string& tool, const Json& arguments) const {
    std::shared_ptr<Endpoint> endpoint;
    {
        std::lock_guard lock(mutex_);
        auto it = routes_.find(tool);
        if (it == routes_.end()) return ToolCallResult::error("unknown tool '" + tool + "'");
        if (auto problem = it->second.first.validate(arguments)) return ToolCallResult::error(*problem);
        endpoint = it->second.second;
    }
    return call_tool(*endpoint, tool, arguments);
}

}  // namespace derisk::mcp
