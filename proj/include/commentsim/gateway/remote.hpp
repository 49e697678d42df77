#pragma once

// HTTP backends speaking OpenAI-compatible JSON. Wire formats are documented
// in docs/gateway_protocols.md. Each request is retried up to max_retries
// times on connection failures, 429 and 5xx, with exponential backoff.

#include "commentsim/gateway/gateway.hpp"

#include <json.hpp>

namespace commentsim::gateway {

/// Parsed form of an endpoint URL such as "https://host:8443/v1/chat/completions".
struct Endpoint {
    std::string scheme_host_port;  // "https://host:8443"
    std::string path;              // "/v1/chat/completions"
};

Endpoint parse_endpoint(const std::string& url);

nlohmann::json build_chat_request(const ChatExchange& exchange, const GatewayConfig& config);
nlohmann::json build_caption_request(const EncodedImage& panel, std::string_view dialogue,
                                     std::string_view instruction, const GatewayConfig& config);
nlohmann::json build_embedding_request(std::string_view text, const GatewayConfig& config);

std::string parse_chat_response(const nlohmann::json& body);
EmbeddingVector parse_embedding_response(const nlohmann::json& body);
std::vector<TranscriptSegment> parse_transcription_response(const nlohmann::json& body);

/// Replaces every occurrence of the configured secret with "***".
std::string redact_secret(std::string text, const GatewayConfig& config);

/// Shared request machinery: auth, timeouts, retry loop, attempt logging.
class HttpTransport {
  public:
    HttpTransport(GatewayConfig config, std::string kind);

    nlohmann::json post_json(const nlohmann::json& body);

    struct FilePart {
        std::string name;
        std::string content;
        std::string filename;
        std::string content_type;
    };
    nlohmann::json post_multipart(const std::vector<FilePart>& parts);

    std::uint64_t attempts() const noexcept { return attempts_.load(); }

  private:
    template <class Send>
    nlohmann::json with_retries(Send&& send);

    GatewayConfig config_;
    std::string kind_;
    Endpoint endpoint_;
    std::atomic<std::uint64_t> attempts_{0};
};

class RemoteTranscriber final : public Transcriber {
  public:
    explicit RemoteTranscriber(GatewayConfig config);
    std::uint64_t attempts() const noexcept { return transport_.attempts(); }

  protected:
    std::vector<TranscriptSegment> do_transcribe(const AudioInput& audio) override;

  private:
    HttpTransport transport_;
};

class RemoteCaptioner final : public Captioner {
  public:
    explicit RemoteCaptioner(GatewayConfig config);
    std::uint64_t attempts() const noexcept { return transport_.attempts(); }

  protected:
    std::string do_caption(const EncodedImage& panel, std::string_view dialogue,
                           std::string_view instruction) override;

  private:
    HttpTransport transport_;
};

class RemoteChatModel final : public ChatModel {
  public:
    explicit RemoteChatModel(GatewayConfig config);
    std::uint64_t attempts() const noexcept { return transport_.attempts(); }

  protected:
    std::string do_complete(const ChatExchange& exchange) override;

  private:
    HttpTransport transport_;
};

class RemoteEmbedder final : public Embedder {
  public:
    explicit RemoteEmbedder(GatewayConfig config);
    std::uint64_t attempts() const noexcept { return transport_.attempts(); }
    /// Learned from the first response; 0 before that.
    std::size_t dimension() const noexcept override { return dimension_.load(); }

  protected:
    EmbeddingVector do_embed(std::string_view text) override;

  private:
    HttpTransport transport_;
    std::atomic<std::size_t> dimension_{0};
};

}  // namespace commentsim::gateway
