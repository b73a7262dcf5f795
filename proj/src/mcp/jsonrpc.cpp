#include "derisk/mcp/jsonrpc.hpp"

namespace derisk::mcp {

namespace {

Json encode_object(const Frame& frame) {
    Json j;
    j["jsonrpc"] = "2.0";
    if (const auto* req = std::get_if<Request>(&frame)) {
        if (req->id) j["id"] = *req->id;
        j["method"] = req->method;
        if (!req->params.is_null()) j["params"] = req->params;
        return j;
    }
    const auto& resp = std::get<Response>(frame);
    j["id"] = resp.id;
    if (resp.error) {
        j["error"] = {{"code", resp.error->code}, {"message", resp.error->message}};
    } else {
        j["result"] = resp.result ? *resp.result : Json(nullptr);
    }
    return j;
}

[[noreturn]] void invalid(const std::string& why) { throw FrameError(Errc::ProtocolError, rpc_code::invalid_request, why); }

bool valid_id(const Json& id) { return id.is_string() || id.is_number() || id.is_null(); }

}  // namespace

std::string encode_frame(const Frame& frame) { return encode_object(frame).dump(); }

Frame decode_frame(std::string_view wire) {
    Json j;
    try {
        j = Json::parse(wire);
    } catch (const Json::parse_error& e) {
        throw FrameError(Errc::FrameParseError, rpc_code::parse_error, e.what());
    }
    if (!j.is_object()) invalid("frame must be an object");
    auto version = j.find("jsonrpc");
    if (version == j.end() || !version->is_string() || version->get<std::string>() != "2.0")
        invalid("jsonrpc must be \"2.0\"");

    if (j.contains("method")) {
        if (!j["method"].is_string()) invalid("method must be a string");
        Request req;
        req.method = j["method"].get<std::string>();
        if (j.contains("id")) {
            if (!valid_id(j["id"])) invalid("id must be a string, number or null");
            req.id = j["id"];
        }
        if (j.contains("params")) {
            req.params = j["params"];
            if (!req.params.is_object() && !req.params.is_array()) invalid("params must be structured");
        }
        return req;
    }

    const bool has_result = j.contains("result");
    const bool has_error = j.contains("error");
    if (has_result == has_error) invalid("response needs exactly one of result/error");
    if (!j.contains("id") || !valid_id(j["id"])) invalid("response needs an id");
    Response resp;
    resp.id = j["id"];
    if (has_result) {
        resp.result = j["result"];
    } else {
        const auto& e = j["error"];
        if (!e.is_object() || !e.contains("code") || !e["code"].is_number_integer() || !e.contains("message") ||
            !e["message"].is_string())
            invalid("error must be {code, message}");
        resp.error = RpcError{e["code"].get<int>(), e["message"].get<std::string>()};
    }
    return resp;
}

}  // namespace derisk::mcp
