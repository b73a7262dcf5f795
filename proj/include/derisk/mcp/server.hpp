#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "derisk/mcp/jsonrpc.hpp"
#include "derisk/mcp/tool.hpp"

namespace derisk::mcp {

using ToolHandler = std::function<ToolCallResult(const Json& arguments)>;

/// Tool registry answering tools/list and tools/call. Handlers may run concurrently.
class ToolServer {
public:
    explicit ToolServer(std::string name) : name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

    /// DuplicateTool when the name is already registered.
    void register_tool(ToolDescriptor descriptor, ToolHandler handler);

    /// Lexicographic by name.
    std::vector<ToolDescriptor> list() const;

    /// Unknown tools and schema violations come back as is_error results. Errors thrown by a
    /// handler are converted the same way.
    ToolCallResult call(const std::string& tool, const Json& arguments) const;

    /// nullopt for notifications.
    std::optional<Response> handle(const Request& request) const;

    /// Decode, dispatch, encode. Undecodable input yields an error response with a null id.
    std::optional<std::string> handle_line(std::string_view line) const;

private:
    struct Entry {
        ToolDescriptor descriptor;
        ToolHandler handler;
    };
    std::string name_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, Entry> tools_;
};

/// Newline-delimited frames until EOF.
void serve_stdio(const ToolServer& server, std::istream& in, std::ostream& out);

}  // namespace derisk::mcp
