#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace commentsim::util {

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
/// Runs of ASCII whitespace become one space; leading/trailing removed.
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_icase(std::string_view s, std::string_view prefix);
bool is_blank(std::string_view s);

/// Number of Unicode code points in a UTF-8 string (invalid bytes count as one).
std::size_t utf8_length(std::string_view s);
/// Prefix of at most `max_chars` code points, never splitting a sequence.
std::string utf8_truncate(std::string_view s, std::size_t max_chars);

/// First `n` whitespace-separated words joined by single spaces.
std::string first_words(std::string_view s, std::size_t n);

}  // namespace commentsim::util
