#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace derisk {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

/// Accepts "YYYY-MM-DDTHH:MM:SSZ", "YYYY-MM-DDTHH:MM:SS" and "YYYY-MM-DD HH:MM:SS";
/// all are read as UTC. Throws Error(PreconditionViolation) on anything else.
Timestamp parse_timestamp(std::string_view text);
bool try_parse_timestamp(std::string_view text, Timestamp& out) noexcept;

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_timestamp(Timestamp ts);

/// Wall clock, used only for informational `ts` fields.
std::string now_iso8601_millis();

}  // namespace derisk
