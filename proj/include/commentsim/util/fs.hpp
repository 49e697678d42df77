#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace commentsim::util {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Write to a sibling temp file, then rename over the target. Readers see
/// either the old content or the new content, never a partial file.
void write_atomic(const std::filesystem::path& path, std::string_view content);
void write_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& content);

}  // namespace commentsim::util
