#pragma once

#include <string>

#include <json.hpp>  // vendored nlohmann/json

namespace derisk {

// Insertion-ordered so wire frames keep their field order byte-for-byte.
using Json = nlohmann::ordered_json;

/// Serializes with object keys sorted recursively. Used wherever a payload's
/// bytes must not depend on construction order (token counting, golden dumps).
std::string canonical_dump(const Json& value);

/// Text view of a message payload: strings as-is, everything else canonical.
std::string payload_text(const Json& value);

}  // namespace derisk
