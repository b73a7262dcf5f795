#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "derisk/common/error.hpp"
#include "derisk/common/json_util.hpp"

namespace derisk::mcp {

namespace rpc_code {
inline constexpr int parse_error = -32700;
inline constexpr int invalid_request = -32600;
inline constexpr int method_not_found = -32601;
inline constexpr int invalid_params = -32602;
inline constexpr int internal_error = -32603;
}  // namespace rpc_code

struct RpcError {
    int code = rpc_code::internal_error;
    std::string message;
    bool operator==(const RpcError&) const = default;
};

struct Request {
    std::optional<Json> id;  ///< absent for notifications
    std::string method;
    Json params;             ///< null when omitted

    bool is_notification() const { return !id.has_value(); }
    bool operator==(const Request&) const = default;
};

struct Response {
    Json id;
    std::optional<Json> result;
    std::optional<RpcError> error;
    bool operator==(const Response&) const = default;
};

using Frame = std::variant<Request, Response>;

/// Codec failure carrying the JSON-RPC error code a server would answer with.
class FrameError : public Error {
public:
    FrameError(Errc code, int rpc, const std::string& message) : Error(code, message), rpc_(rpc) {}
    int rpc_code() const noexcept { return rpc_; }

private:
    int rpc_;
};

/// Compact single-line JSON-RPC 2.0 object, no trailing newline.
std::string encode_frame(const Frame& frame);

/// FrameError(FrameParseError, -32700) on malformed JSON;
/// FrameError(ProtocolError, -32600) when jsonrpc != "2.0" or the shape is neither request nor response.
Frame decode_frame(std::string_view wire);

}  // namespace derisk::mcp
