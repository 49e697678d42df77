#include "commentsim/util/hash.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>

namespace commentsim::util {
namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> digest(const void* data, std::size_t size) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
    SHA256(static_cast<const unsigned char*>(data), size, out.data());
    return out;
}

std::string to_hex(std::span<const unsigned char> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(bytes.size() * 2);
    for (unsigned char b : bytes) {
        hex.push_back(kDigits[b >> 4]);
        hex.push_back(kDigits[b & 0x0f]);
    }
    return hex;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    auto d = digest(bytes.data(), bytes.size());
    return to_hex(d);
}

std::string sha256_hex(std::string_view text) {
    auto d = digest(text.data(), text.size());
    return to_hex(d);
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
    return sha256_hex(bytes).substr(0, 16);
}

std::string content_hash(std::string_view text) {
    return sha256_hex(text).substr(0, 16);
}

std::uint64_t hash64(std::string_view text) {
    auto d = digest(text.data(), text.size());
    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) {
        value = (value << 8) | d[static_cast<std::size_t>(i)];
    }
    return value;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                        static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(written));
    return out;
}

}  // namespace commentsim::util
