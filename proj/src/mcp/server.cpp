#include "derisk/mcp/server.hpp"

#include <istream>
#include <mutex>
#include <ostream>

#include "derisk/common/error.hpp"

namespace derisk::mcp {

void ToolServer::register_tool(ToolDescriptor descriptor, ToolHandler handler) {
    std::unique_lock lock(mutex_);
    if (tools_.count(descriptor.name)) fail(Errc::DuplicateTool, descriptor.name + " already registered on " + name_);
    descriptor.server = name_;
    auto key = descriptor.name;
    tools_.emplace(std::move(key), Entry{std::move(descriptor), std::move(handler)});
}

std::vector<ToolDescriptor> ToolServer::list() const {
    std::shared_lock lock(mutex_);
    std::vector<ToolDescriptor> out;
    for (const auto& [_, e] : tools_) out.push_back(e.descriptor);
    return out;
}

ToolCallResult ToolServer::call(const std::string& tool, const Json& arguments) const {
    const Entry* entry = nullptr;
    {
        std::shared_lock lock(mutex_);
        auto it = tools_.find(tool);
        if (it != tools_.end()) entry = &it->second;
    }
    if (!entry) return ToolCallResult::error("unknown tool '" + tool + "'");
    if (auto problem = entry->descriptor.validate(arguments)) return ToolCallResult::error(*problem);
    try {
        return entry->handler(arguments);
    } catch (const Error& e) {
        return ToolCallResult::error(e.what());
    }
}

std::optional<Response> ToolServer::handle(const Request& request) const {
    auto reply = [&](Response r) -> std::optional<Response> {
        if (request.is_notification()) return std::nullopt;
        r.id = *request.id;
        return r;
    };
    auto error = [&](int code, std::string message) {
        Response r;
        r.error = RpcError{code, std::move(message)};
        return reply(std::move(r));
    };

    if (request.method == "tools/list") {
        Json tools = Json::array();
        for (const auto& d : list()) tools.push_back(d.to_json());
        Response r;
        r.result = Json{{"tools", std::move(tools)}};
        return reply(std::move(r));
    }
    if (request.method == "tools/call") {
        const auto& p = request.params;
        if (!p.is_object() || !p.contains("name") || !p["name"].is_string())
            return error(rpc_code::invalid_params, "tools/call needs params.name");
        const Json args = p.contains("arguments") ? p["arguments"] : Json::object();
        Response r;
        r.result = call(p["name"].get<std::string>(), args).to_json();
        return reply(std::move(r));
    }
    return error(rpc_code::method_not_found, "method not found: " + request.method);
}

std::optional<std::string> ToolServer::handle_line(std::string_view line) const {
    Frame frame;
    try {
        frame = decode_frame(line);
    } catch (const FrameError& e) {
        Response r;
        r.id = nullptr;
        r.error = RpcError{e.rpc_code(), e.detail()};
        return encode_frame(r);
    }
    const auto* req = std::get_if<Request>(&frame);
    if (!req) return std::nullopt;
    auto resp = handle(*req);
    if (!resp) return std::nullopt;
    return encode_frame(*resp);
}

void serve_stdio(const ToolServer& server, std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (auto reply = server.handle_line(line)) {
            out << *reply << '\n';
            out.flush();
        }
    }
}

}  // namespace derisk::mcp
