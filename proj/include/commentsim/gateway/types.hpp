#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace commentsim::gateway {

enum class BackendKind { remote, mock };

std::string_view to_string(BackendKind kind) noexcept;
BackendKind backend_kind_from_string(std::string_view text);

/// Connection settings for one model backend.
///
/// `api_key_ref` names the environment variable that holds the credential;
/// the secret itself is only read at request time and never stored here.
struct GatewayConfig {
    BackendKind backend = BackendKind::mock;
    std::string endpoint_url;
    std::string api_key_ref;
    std::string model_name = "mock";
    double timeout_seconds = 60.0;
    int max_retries = 2;
    int backoff_ms = 250;
    std::int64_t context_budget = 200'000;  // chat backends only
    int embedding_dimension = 64;          // mock embedder only
    std::size_t max_image_bytes = 20u * 1024u * 1024u;

    /// Throws Error(config) when an invariant does not hold.
    void validate(bool is_chat_backend) const;
};

struct TranscriptSegment {
    double start = 0.0;
    double end = 0.0;
    std::string text;

    friend bool operator==(const TranscriptSegment&, const TranscriptSegment&) = default;
};

/// Sorts by start, rejects segments with start >= end, negative start or
/// blank text, and removes overlaps by clipping the later segment's start to
/// the earlier segment's end. A segment swallowed entirely by clipping is
/// merged into its predecessor so no transcript text is lost.
std::vector<TranscriptSegment> normalize_transcript(std::vector<TranscriptSegment> segments);

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dimension() const noexcept { return values.size(); }
    /// Throws Error(input) on empty or non-finite vectors.
    void validate() const;
    double norm() const;

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

enum class Role { user, assistant };
std::string_view to_string(Role role) noexcept;

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct ChatExchange {
    std::string system_instruction;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;

    /// Nonempty, roles alternate starting with user, temperature in [0, 2].
    void validate() const;
    /// Plain-text rendering used for logging, hashing and token estimation.
    std::string render() const;
    const std::string& last_user_message() const;
};

/// Characters/4, rounded up. Monotone under concatenation.
std::int64_t estimate_tokens(std::string_view text) noexcept;
std::int64_t estimate_tokens(const ChatExchange& exchange) noexcept;

enum class AudioFormat { container, pcm_s16le };

/// Audio handed to a transcription backend: either a whole media container
/// (the backend demuxes it) or raw 16-bit little-endian PCM.
struct AudioInput {
    std::vector<std::uint8_t> bytes;
    double duration = 0.0;
    AudioFormat format = AudioFormat::container;
    std::string mime_type = "application/octet-stream";
    std::string filename = "audio";
};

struct EncodedImage {
    std::vector<std::uint8_t> bytes;
    std::string mime_type = "image/png";
    int width = 0;
    int height = 0;
};

}  // namespace commentsim::gateway
