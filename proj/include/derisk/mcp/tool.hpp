#pragma once

#include <optional>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"
#include "derisk/common/time.hpp"

namespace derisk::mcp {

enum class ParamType { string, number, integer, boolean, timestamp, array, object };

std::string_view to_string(ParamType type) noexcept;

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::string;
    bool required = true;
    std::string description;
    bool operator==(const ParamSpec&) const = default;
};

struct ToolDescriptor {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
    std::string server;

    bool operator==(const ToolDescriptor&) const = default;

    /// MCP listing shape: {name, description, inputSchema:{type:"object", properties, required}}.
    /// timestamp is published as {"type":"string","format":"date-time"}.
    Json to_json() const;
    static ToolDescriptor from_json(const Json& j, std::string server = {});

    /// Empty when `arguments` satisfies the schema, else a message naming the offending parameter.
    std::optional<std::string> validate(const Json& arguments) const;
};

struct ContentBlock {
    enum class Kind { text, data };
    Kind kind = Kind::text;
    std::string text;
    Json data;

    static ContentBlock of_text(std::string t) { return {Kind::text, std::move(t), nullptr}; }
    static ContentBlock of_data(Json d) { return {Kind::data, {}, std::move(d)}; }
    bool operator==(const ContentBlock&) const = default;
};

struct ToolCallResult {
    std::vector<ContentBlock> content;
    bool is_error = false;

    static ToolCallResult error(std::string message);
    static ToolCallResult data(Json payload);

    /// Concatenated text blocks.
    std::string text() const;
    const Json* first_data() const;

    Json to_json() const;  ///< {"content":[...],"isError":bool}
    static ToolCallResult from_json(const Json& j);
    bool operator==(const ToolCallResult&) const = default;
};

enum class Polarity { higher_is_worse, higher_is_better };

std::string_view to_string(Polarity p) noexcept;
Polarity parse_polarity(std::string_view name);

struct SeriesPoint {
    Timestamp ts = 0;
    double value = 0.0;
    bool operator==(const SeriesPoint&) const = default;
};

struct TimeSeries {
    std::string app;
    std::string metric;
    std::vector<SeriesPoint> points;
    Polarity polarity = Polarity::higher_is_worse;

    bool operator==(const TimeSeries&) const = default;

    /// {"app","metric","polarity","points":[[iso, value], ...]}
    Json to_json() const;
    static TimeSeries from_json(const Json& j);
};

}  // namespace derisk::mcp
