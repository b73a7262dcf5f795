#pragma once

#include <cstddef>
#include <string_view>

namespace derisk::llm {

/// ceil(utf8 bytes / 4). Every budget in the system is stated against this count.
constexpr std::size_t count_tokens(std::string_view text) noexcept { return (text.size() + 3) / 4; }

}  // namespace derisk::llm
