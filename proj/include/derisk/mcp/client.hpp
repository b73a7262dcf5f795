#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "derisk/mcp/server.hpp"

namespace derisk::mcp {

/// One request frame in, one response frame out (empty for notifications).
class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual std::string exchange(const std::string& frame) = 0;
    virtual std::string describe() const = 0;

    std::int64_t next_id() { return ++ids_; }

private:
    std::atomic<std::int64_t> ids_{0};
};

class InProcessEndpoint final : public Endpoint {
public:
    explicit InProcessEndpoint(std::shared_ptr<const ToolServer> server) : server_(std::move(server)) {}
    std::string exchange(const std::string& frame) override;
    std::string describe() const override { return "inproc:" + server_->name(); }

private:
    std::shared_ptr<const ToolServer> server_;
};

/// Spawns `argv` and speaks newline-delimited frames over its stdin/stdout.
class StdioEndpoint final : public Endpoint {
public:
    explicit StdioEndpoint(std::vector<std::string> argv);
    ~StdioEndpoint() override;
    StdioEndpoint(const StdioEndpoint&) = delete;
    StdioEndpoint& operator=(const StdioEndpoint&) = delete;

    std::string exchange(const std::string& frame) override;
    std::string describe() const override;

private:
    std::vector<std::string> argv_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::mutex mutex_;
};

/// One frame per POST to `base_url` + `path`.
class HttpEndpoint final : public Endpoint {
public:
    HttpEndpoint(std::string base_url, std::string path, int timeout_ms = 10000);
    std::string exchange(const std::string& frame) override;
    std::string describe() const override { return "http:" + base_url_ + path_; }

private:
    std::string base_url_;
    std::string path_;
    int timeout_ms_;
};

/// TransportError on I/O failure or id mismatch.
std::vector<ToolDescriptor> list_tools(Endpoint& endpoint);

/// JSON-RPC level errors (unknown method, invalid request) throw FrameError(ProtocolError, code);
/// tool-level failures are is_error results.
ToolCallResult call_tool(Endpoint& endpoint, const std::string& tool, const Json& arguments);

/// Federates several endpoints into one tool namespace.
class ToolClient {
public:
    /// Lists the endpoint's tools; a name already provided by another endpoint is DuplicateTool
    /// and leaves the client unchanged.
    void add_endpoint(std::shared_ptr<Endpoint> endpoint);

    std::vector<ToolDescriptor> tools() const;
    std::set<std::string> tool_names() const;
    std::optional<ToolDescriptor> find(const std::string& tool) const;

    /// Re-validates arguments locally before sending; unknown names yield is_error "unknown tool".
    ToolCallResult call(const std::string& tool, const Json& arguments) const;

private:
    mutable std::mutex mutex_;
    std::vector<std::shared_ptr<Endpoint>> endpoints_;
    std::map<std::string, std::pair<ToolDescriptor, std::shared_ptr<Endpoint>>> routes_;
};

}  // namespace derisk::mcp
