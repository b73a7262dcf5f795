#pragma once

#include <filesystem>
#include <string>

#include "derisk/session/agents.hpp"

namespace derisk::testing {

inline const char* const kTrendQuery =
    "Alert on anonymousapp for 'error rate'. Start time: 2025-08-19 15:21:00. Analyze the monitoring curve trend as "
    "of 15:26:00. Is it worsening or recovering?";

std::filesystem::path source_dir();
std::filesystem::path scenarios_dir();
std::filesystem::path cli_path();

/// Fresh, empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& body);

}  // namespace derisk::testing
