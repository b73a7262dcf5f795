#include "derisk/mcp/tool.hpp"

#include <set>

#include "derisk/common/error.hpp"

namespace derisk::mcp {

std::string_view to_string(ParamType type) noexcept {
    switch (type) {
        case ParamType::string: return "string";
        case ParamType::number: return "number";
        case ParamType::integer: return "integer";
        case ParamType::boolean: return "boolean";
        case ParamType::timestamp: return "timestamp";
        case ParamType::array: return "array";
        case ParamType::object: return "object";
    }
    return "string";
}

namespace {

ParamType param_type_from_schema(const Json& prop) {
    const auto type = prop.value("type", std::string("string"));
    if (type == "string") return prop.value("format", std::string()) == "date-time" ? ParamType::timestamp : ParamType::string;
    if (type == "number") return ParamType::number;
    if (type == "integer") return ParamType::integer;
    if (type == "boolean") return ParamType::boolean;
    if (type == "array") return ParamType::array;
    if (type == "object") return ParamType::object;
    if (type == "timestamp") return ParamType::timestamp;
    fail(Errc::ProtocolError, "unsupported parameter type '" + type + "'");
}

bool matches(ParamType type, const Json& v) {
    switch (type) {
        case ParamType::string: return v.is_string();
        case ParamType::number: return v.is_number();
        case ParamType::integer: return v.is_number_integer();
        case ParamType::boolean: return v.is_boolean();
        case ParamType::array: return v.is_array();
        case ParamType::object: return v.is_object();
        case ParamType::timestamp: {
            Timestamp ts;
            return v.is_string() && try_parse_timestamp(v.get<std::string>(), ts);
        }
    }
    return false;
}

}  // namespace

Json ToolDescriptor::to_json() const {
    Json props = Json::object();
    Json required = Json::array();
    for (const auto& p : params) {
        Json prop;
        if (p.type == ParamType::timestamp) {
            prop["type"] = "string";
            prop["format"] = "date-time";
        } else {
            prop["type"] = std::string(mcp::to_string(p.type));
        }
        prop["description"] = p.description;
        props[p.name] = std::move(prop);
        if (p.required) required.push_back(p.name);
    }
    Json j;
    j["name"] = name;
    j["description"] = description;
    j["inputSchema"] = {{"type", "object"}, {"properties", std::move(props)}, {"required", std::move(required)}};
    return j;
}

ToolDescriptor ToolDescriptor::from_json(const Json& j, std::string server) {
    ToolDescriptor d;
    try {
        d.name = j.at("name").get<std::string>();
        d.description = j.value("description", std::string());
        const auto schema = j.value("inputSchema", Json::object());
        std::set<std::string> required;
        for (const auto& r : schema.value("required", Json::array())) required.insert(r.get<std::string>());
        const auto properties = schema.value("properties", Json::object());
        for (const auto& [name, prop] : properties.items()) {
            ParamSpec p;
            p.name = name;
            p.type = param_type_from_schema(prop);
            p.required = required.count(name) != 0;
            p.description = prop.value("description", std::string());
            d.params.push_back(std::move(p));
        }
    } catch (const Json::exception& e) {
        fail(Errc::ProtocolError, std::string("malformed tool descriptor: ") + e.what());
    }
    d.server = std::move(server);
    return d;
}

std::optional<std::string> ToolDescriptor::validate(const Json& arguments) const {
    if (!arguments.is_object()) return std::string("arguments must be an object");
    for (const auto& p : params) {
        auto it = arguments.find(p.name);
        if (it == arguments.end()) {
            if (p.required) return "missing required parameter '" + p.name + "'";
            continue;
        }
        if (!matches(p.type, *it))
            return "parameter '" + p.name + "' must be of type " + std::string(mcp::to_string(p.type));
    }
    for (const auto& [key, _] : arguments.items()) {
        bool known = false;
        for (const auto& p : params) known = known || p.name == key;
        if (!known) return "unexpected parameter '" + key + "'";
    }
    return std::nullopt;
}

ToolCallResult ToolCallResult::error(std::string message) {
    ToolCallResult r;
    r.is_error = true;
    r.content.push_back(ContentBlock::of_text(std::move(message)));
    return r;
}

ToolCallResult ToolCallResult::data(Json payload) {
    ToolCallResult r;
    r.content.push_back(ContentBlock::of_data(std::move(payload)));
    return r;
}

std::string ToolCallResult::text() const {
    std::string out;
    for (const auto& b : content)
        if (b.kind == ContentBlock::Kind::text) {
            if (!out.empty()) out += "\n";
            out += b.text;
        }
    return out;
}

const Json* ToolCallResult::first_data() const {
    for (const auto& b : content)
        if (b.kind == ContentBlock::Kind::data) return &b.data;
    return nullptr;
}

Json ToolCallResult::to_json() const {
    Json blocks = Json::array();
    for (const auto& b : content) {
        if (b.kind == ContentBlock::Kind::text) blocks.push_back({{"type", "text"}, {"text", b.text}});
        else blocks.push_back({{"type", "data"}, {"data", b.data}});
    }
    Json j;
    j["content"] = std::move(blocks);
    j["isError"] = is_error;
    return j;
}

ToolCallResult ToolCallResult::from_json(const Json& j) {
    ToolCallResult r;
    try {
        for (const auto& b : j.at("content")) {
            const auto type = b.at("type").get<std::string>();
            if (type == "text") r.content.push_back(ContentBlock::of_text(b.at("text").get<std::string>()));
            else if (type == "data") r.content.push_back(ContentBlock::of_data(b.at("data")));
            else fail(Errc::ProtocolError, "unknown content block type '" + type + "'");
        }
        r.is_error = j.value("isError", false);
    } catch (const Json::exception& e) {
        fail(Errc::ProtocolError, std::string("malformed tool result: ") + e.what());
    }
    return r;
}

std::string_view to_string(Polarity p) noexcept {
    return p == Polarity::higher_is_worse ? "higher_is_worse" : "higher_is_better";
}

Polarity parse_polarity(std::string_view name) {
    if (name == "higher_is_worse") return Polarity::higher_is_worse;
    if (name == "higher_is_better") return Polarity::higher_is_better;
    fail(Errc::PreconditionViolation, "unknown polarity '" + std::string(name) + "'");
}

Json TimeSeries::to_json() const {
    Json pts = Json::array();
    for (const auto& p : points) pts.push_back(Json::array({format_timestamp(p.ts), p.value}));
    Json j;
    j["app"] = app;
    j["metric"] = metric;
    j["polarity"] = std::string(mcp::to_string(polarity));
    j["points"] = std::move(pts);
    return j;
}

TimeSeries TimeSeries::from_json(const Json& j) {
    TimeSeries s;
    s.app = j.at("app").get<std::string>();
    s.metric = j.at("metric").get<std::string>();
    s.polarity = parse_polarity(j.value("polarity", std::string("higher_is_worse")));
    for (const auto& p : j.at("points")) s.points.push_back({parse_timestamp(p.at(0).get<std::string>()), p.at(1).get<double>()});
    return s;
}

}  // namespace derisk::mcp
