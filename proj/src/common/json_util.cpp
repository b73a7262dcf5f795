#include "derisk/common/json_util.hpp"

namespace derisk {
namespace {

nlohmann::json sorted(const Json& value) {
    if (value.is_object()) {
        nlohmann::json out = nlohmann::json::object();
        for (const auto& [key, item] : value.items()) out[key] = sorted(item);
        return out;
    }
    if (value.is_array()) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& item : value) out.push_back(sorted(item));
        return out;
    }
    return nlohmann::json::parse(value.dump());
}

}  // namespace

std::string canonical_dump(const Json& value) { return sorted(value).dump(); }

std::string payload_text(const Json& value) {
    if (value.is_string()) return value.get<std::string>();
    return canonical_dump(value);
}

}  // namespace derisk
