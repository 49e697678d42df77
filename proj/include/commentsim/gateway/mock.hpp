#pragma once

#include "commentsim/gateway/gateway.hpp"

#include <deque>
#include <mutex>

namespace commentsim::gateway {

// Deterministic offline backends. Each is a pure function of its inputs
// (aside from the call counter and, for chat, an optional scripted queue),
// so identical inputs give byte-identical outputs on every machine.

/// Contract:
///  * raw PCM whose samples are all zero -> no segments (silence)
///  * raw PCM with an odd byte count -> input error (undecodable)
///  * anything else -> one segment {0, duration, "mock transcript <hash>"}
///    where <hash> is the first 16 hex digits of SHA-256 over the bytes.
class MockTranscriber final : public Transcriber {
  public:
    using Transcriber::Transcriber;

  protected:
    std::vector<TranscriptSegment> do_transcribe(const AudioInput& audio) override;
};

/// Contract: "mock caption for panel <image-hash> with dialogue <first 8 words>",
/// with "none" for empty dialogue.
class MockCaptioner final : public Captioner {
  public:
    using Captioner::Captioner;

  protected:
    std::string do_caption(const EncodedImage& panel, std::string_view dialogue,
                           std::string_view instruction) override;
};

/// Script keyed by tags in the last user message:
///  [SUMMARIZE]  -> "SUMMARY: ...\nKEYWORDS: ..." derived from the Title line
///  [COMMENT]    -> a comment body drawn from a fixed word bank, seeded by the prompt
///  [JUDGE]      -> a bare integer in [0, 100], seeded by the prompt
///  otherwise    -> "mock completion <hash>"
/// Replies pushed with push_scripted() are returned first, in FIFO order.
class MockChatModel final : public ChatModel {
  public:
    using ChatModel::ChatModel;

    void push_scripted(std::string reply);

  protected:
    std::string do_complete(const ChatExchange& exchange) override;

  private:
    std::mutex mutex_;
    std::deque<std::string> scripted_;
};

/// Contract: seed std::mt19937_64 with the first 8 bytes (big-endian) of
/// SHA-256(text), draw `embedding_dimension` values uniform in [-1, 1), and
/// scale to unit length.
class MockEmbedder final : public Embedder {
  public:
    using Embedder::Embedder;

    std::size_t dimension() const noexcept override {
        return static_cast<std::size_t>(config().embedding_dimension);
    }

  protected:
    EmbeddingVector do_embed(std::string_view text) override;
};

/// The text MockChatModel returns for an exchange (ignoring scripted replies).
std::string mock_chat_reply(const ChatExchange& exchange);

}  // namespace commentsim::gateway
