#include "commentsim/gateway/gateway.hpp"

#include "commentsim/error.hpp"
#include "commentsim/gateway/mock.hpp"
#include "commentsim/gateway/remote.hpp"
#include "commentsim/util/text.hpp"

#include <fmt/format.h>

namespace commentsim::gateway {

std::vector<TranscriptSegment> Transcriber::transcribe(const AudioInput& audio) {
    if (audio.bytes.empty()) {
        throw Error(ErrorKind::input, "audio input is empty");
    }
    count_call();
    return normalize_transcript(do_transcribe(audio));
}

std::string dialogue_or_none(std::string_view dialogue) {
    if (util::is_blank(dialogue)) return std::string(kNoDialogue);
    return std::string(dialogue);
}

std::string Captioner::caption(const EncodedImage& panel, std::string_view dialogue,
                               std::string_view instruction) {
    if (panel.bytes.empty()) {
        throw Error(ErrorKind::input, "caption request has an empty image");
    }
    if (panel.bytes.size() > config().max_image_bytes) {
        throw Error(ErrorKind::input,
                    fmt::format("image of {} bytes exceeds the backend limit of {} bytes",
                                panel.bytes.size(), config().max_image_bytes));
    }
    if (util::is_blank(instruction)) {
        throw Error(ErrorKind::input, "caption instruction is empty");
    }
    count_call();
    std::string text = do_caption(panel, dialogue, instruction);
    if (util::is_blank(text)) {
        throw Error(ErrorKind::generation, "captioning backend returned an empty caption");
    }
    return text;
}

void check_budget(const ChatExchange& exchange, std::int64_t budget) {
    const auto estimate = estimate_tokens(exchange);
    if (estimate > budget) {
        throw BudgetError(estimate, budget);
    }
}

std::string ChatModel::complete(const ChatExchange& exchange) {
    exchange.validate();
    check_budget(exchange, config().context_budget);
    count_call();
    std::string text = do_complete(exchange);
    if (util::is_blank(text)) {
        throw Error(ErrorKind::generation, "chat backend returned an empty completion");
    }
    return text;
}

EmbeddingVector Embedder::embed(std::string_view text) {
    if (util::is_blank(text)) {
        throw Error(ErrorKind::input, "cannot embed empty text");
    }
    count_call();
    EmbeddingVector v = do_embed(text);
    v.validate();
    const auto expected = dimension();
    if (expected != 0 && v.dimension() != expected) {
        throw Error(ErrorKind::input, fmt::format("embedding backend returned dimension {}, expected {}",
                                                  v.dimension(), expected));
    }
    return v;
}

std::shared_ptr<Transcriber> make_transcriber(const GatewayConfig& config) {
    config.validate(false);
    if (config.backend == BackendKind::mock) return std::make_shared<MockTranscriber>(config);
    return std::make_shared<RemoteTranscriber>(config);
}

std::shared_ptr<Captioner> make_captioner(const GatewayConfig& config) {
    config.validate(false);
    if (config.backend == BackendKind::mock) return std::make_shared<MockCaptioner>(config);
    return std::make_shared<RemoteCaptioner>(config);
}

std::shared_ptr<ChatModel> make_chat_model(const GatewayConfig& config) {
    config.validate(true);
    if (config.backend == BackendKind::mock) return std::make_shared<MockChatModel>(config);
    return std::make_shared<RemoteChatModel>(config);
}

std::shared_ptr<Embedder> make_embedder(const GatewayConfig& config) {
    config.validate(false);
    if (config.backend == BackendKind::mock) return std::make_shared<MockEmbedder>(config);
    return std::make_shared<RemoteEmbedder>(config);
}

Gateways make_gateways(const GatewaysConfig& config) {
    Gateways g;
    g.transcriber = make_transcriber(config.transcription);
    g.captioner = make_captioner(config.captioning);
    g.chat = make_chat_model(config.chat);
    g.embedder = make_embedder(config.embedding);
    for (const auto& judge : config.judges) g.judges.push_back(make_chat_model(judge));
    return g;
}

GatewaysConfig as_mock(GatewaysConfig config) {
    config.transcription.backend = BackendKind::mock;
    config.captioning.backend = BackendKind::mock;
    config.chat.backend = BackendKind::mock;
    config.embedding.backend = BackendKind::mock;
    for (auto& j : config.judges) j.backend = BackendKind::mock;
    return config;
}

}  // namespace commentsim::gateway
