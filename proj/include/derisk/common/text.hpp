#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace derisk::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

/// Largest n <= max_bytes such that s[0, n) ends on a UTF-8 code point boundary.
std::size_t utf8_floor(std::string_view s, std::size_t max_bytes);

/// Sentences split at [.?!] followed by whitespace and at newlines; trimmed, empties dropped.
std::vector<std::string> sentences(std::string_view s);

std::string first_sentence(std::string_view s);
std::string last_sentence(std::string_view s);

/// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

}  // namespace derisk::text
