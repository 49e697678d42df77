#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace commentsim::util {

/// Lowercase hex SHA-256 of the input.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// First 16 hex digits of the SHA-256. Used as the short content hash in ids
/// and mock outputs.
std::string content_hash(std::span<const std::uint8_t> bytes);
std::string content_hash(std::string_view text);

/// First 8 bytes of the SHA-256, big-endian.
std::uint64_t hash64(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace commentsim::util
