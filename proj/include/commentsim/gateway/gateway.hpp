#pragma once

#include "commentsim/gateway/types.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace commentsim::gateway {

/// Common bookkeeping for every backend: its config and a call counter.
/// Counters let tests and manifests observe how often a stage hit a backend.
class GatewayBase {
  public:
    explicit GatewayBase(GatewayConfig config) : config_(std::move(config)) {}
    virtual ~GatewayBase() = default;

    GatewayBase(const GatewayBase&) = delete;
    GatewayBase& operator=(const GatewayBase&) = delete;

    const GatewayConfig& config() const noexcept { return config_; }
    const std::string& model_name() const noexcept { return config_.model_name; }
    std::uint64_t call_count() const noexcept { return calls_.load(); }
    void reset_call_count() noexcept { calls_.store(0); }

  protected:
    void count_call() noexcept { calls_.fetch_add(1); }

  private:
    GatewayConfig config_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Speech-to-text. Output is always normalized (sorted, non-overlapping).
class Transcriber : public GatewayBase {
  public:
    using GatewayBase::GatewayBase;

    std::vector<TranscriptSegment> transcribe(const AudioInput& audio);

  protected:
    virtual std::vector<TranscriptSegment> do_transcribe(const AudioInput& audio) = 0;
};

/// Vision-language captioning of one image plus the dialogue heard with it.
class Captioner : public GatewayBase {
  public:
    using GatewayBase::GatewayBase;

    /// Empty dialogue is sent as "none".
    std::string caption(const EncodedImage& panel, std::string_view dialogue,
                        std::string_view instruction);

  protected:
    virtual std::string do_caption(const EncodedImage& panel, std::string_view dialogue,
                                   std::string_view instruction) = 0;
};

/// Chat completion. Over-budget prompts are rejected before the backend is
/// contacted.
class ChatModel : public GatewayBase {
  public:
    using GatewayBase::GatewayBase;

    std::string complete(const ChatExchange& exchange);

  protected:
    virtual std::string do_complete(const ChatExchange& exchange) = 0;
};

/// Text embedding with a fixed output dimension.
class Embedder : public GatewayBase {
  public:
    using GatewayBase::GatewayBase;

    EmbeddingVector embed(std::string_view text);
    /// Dimension of every vector this backend returns, or 0 when unknown
    /// until the first call.
    virtual std::size_t dimension() const noexcept = 0;

  protected:
    virtual EmbeddingVector do_embed(std::string_view text) = 0;
};

/// Text substituted for empty dialogue in caption requests.
inline constexpr std::string_view kNoDialogue = "none";

std::string dialogue_or_none(std::string_view dialogue);

/// Throws BudgetError when the exchange's estimate exceeds `budget`.
void check_budget(const ChatExchange& exchange, std::int64_t budget);

struct GatewaysConfig {
    GatewayConfig transcription;
    GatewayConfig captioning;
    GatewayConfig chat;
    GatewayConfig embedding;
    std::vector<GatewayConfig> judges;
};

/// One backend per modality plus the relevance judges used by evaluation.
struct Gateways {
    std::shared_ptr<Transcriber> transcriber;
    std::shared_ptr<Captioner> captioner;
    std::shared_ptr<ChatModel> chat;
    std::shared_ptr<Embedder> embedder;
    std::vector<std::shared_ptr<ChatModel>> judges;
};

std::shared_ptr<Transcriber> make_transcriber(const GatewayConfig& config);
std::shared_ptr<Captioner> make_captioner(const GatewayConfig& config);
std::shared_ptr<ChatModel> make_chat_model(const GatewayConfig& config);
std::shared_ptr<Embedder> make_embedder(const GatewayConfig& config);
Gateways make_gateways(const GatewaysConfig& config);

/// Every backend forced to mock, keeping model names and budgets.
GatewaysConfig as_mock(GatewaysConfig config);

}  // namespace commentsim::gateway
