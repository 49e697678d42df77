#include "commentsim/gateway/remote.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/hash.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <thread>

namespace commentsim::gateway {
using nlohmann::json;

Endpoint parse_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::config, "endpoint_url must include a scheme: " + url);
    }
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw Error(ErrorKind::config, "unsupported endpoint scheme: " + scheme);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    if (path_start == std::string::npos) {
        e.scheme_host_port = url;
        e.path = "/";
    } else {
        e.scheme_host_port = url.substr(0, path_start);
        e.path = url.substr(path_start);
    }
    if (e.scheme_host_port.size() <= scheme_end + 3) {
        throw Error(ErrorKind::config, "endpoint_url has no host: " + url);
    }
    return e;
}

json build_chat_request(const ChatExchange& exchange, const GatewayConfig& config) {
    json messages = json::array();
    if (!exchange.system_instruction.empty()) {
        messages.push_back({{"role", "system"}, {"content", exchange.system_instruction}});
    }
    for (const auto& m : exchange.messages) {
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    return {{"model", config.model_name},
            {"temperature", exchange.temperature},
            {"messages", std::move(messages)}};
}

json build_caption_request(const EncodedImage& panel, std::string_view dialogue,
                           std::string_view instruction, const GatewayConfig& config) {
    const std::string data_uri =
        "data:" + panel.mime_type + ";base64," + util::base64_encode(panel.bytes);
    json user_content = json::array();
    user_content.push_back(
        {{"type", "text"}, {"text", "Audio caption: " + dialogue_or_none(dialogue)}});
    user_content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_uri}}}});
    return {{"model", config.model_name},
            {"temperature", 0.0},
            {"messages",
             json::array({{{"role", "system"}, {"content", std::string(instruction)}},
                          {{"role", "user"}, {"content", std::move(user_content)}}})}};
}

json build_embedding_request(std::string_view text, const GatewayConfig& config) {
    return {{"model", config.model_name}, {"input", std::string(text)}};
}

std::string parse_chat_response(const json& body) {
    try {
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::transport, "chat response lacks choices[0].message.content");
    }
}

EmbeddingVector parse_embedding_response(const json& body) {
    try {
        EmbeddingVector v;
        v.values = body.at("data").at(0).at("embedding").get<std::vector<double>>();
        return v;
    } catch (const json::exception&) {
        throw Error(ErrorKind::transport, "embedding response lacks data[0].embedding");
    }
}

std::vector<TranscriptSegment> parse_transcription_response(const json& body) {
    std::vector<TranscriptSegment> segments;
    try {
        if (!body.contains("segments")) return segments;
        for (const auto& s : body.at("segments")) {
            segments.push_back({s.at("start").get<double>(), s.at("end").get<double>(),
                                s.at("text").get<std::string>()});
        }
    } catch (const json::exception&) {
        throw Error(ErrorKind::transport, "transcription response has malformed segments");
    }
    return segments;
}

namespace {

std::string read_secret(const GatewayConfig& config) {
    if (config.api_key_ref.empty()) return {};
    const char* value = std::getenv(config.api_key_ref.c_str());
    return value ? std::string(value) : std::string();
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string redact_secret(std::string text, const GatewayConfig& config) {
    const std::string secret = read_secret(config);
    if (secret.empty()) return text;
    for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
        text.replace(pos, secret.size(), "***");
        pos += 3;
    }
    return text;
}

HttpTransport::HttpTransport(GatewayConfig config, std::string kind)
    : config_(std::move(config)), kind_(std::move(kind)), endpoint_(parse_endpoint(config_.endpoint_url)) {}

template <class Send>
json HttpTransport::with_retries(Send&& send) {
    const int total = 1 + config_.max_retries;
    std::string last_error;
    int made = 0;
    for (int attempt = 1; attempt <= total; ++attempt) {
        attempts_.fetch_add(1);
        ++made;
        httplib::Client client(endpoint_.scheme_host_port);
        const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
        const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
        client.set_connection_timeout(timeout_us);
        client.set_read_timeout(timeout_us);
        client.set_write_timeout(timeout_us);
        const std::string secret = read_secret(config_);
        if (!secret.empty()) client.set_bearer_token_auth(secret);

        httplib::Result result = send(client);
        bool retry = true;
        if (!result) {
            last_error = "connection failed: " + httplib::to_string(result.error());
        } else if (result->status >= 200 && result->status < 300) {
            spdlog::info("gateway {} attempt {}/{} -> {} {}", kind_, attempt, total,
                         result->status, endpoint_.path);
            try {
                return json::parse(result->body);
            } catch (const json::parse_error&) {
                throw Error(ErrorKind::transport, "gateway " + kind_ + " returned invalid JSON");
            }
        } else {
            last_error = "HTTP status " + std::to_string(result->status);
            retry = retryable_status(result->status);
        }
        last_error = redact_secret(last_error, config_);
        spdlog::warn("gateway {} attempt {}/{} failed: {}", kind_, attempt, total, last_error);
        if (!retry) break;
        if (attempt < total && config_.backoff_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                static_cast<std::int64_t>(config_.backoff_ms) << (attempt - 1)));
        }
    }
    throw Error(ErrorKind::transport,
                redact_secret("gateway " + kind_ + " failed after " +
                                  std::to_string(made) + " attempt(s): " + last_error,
                              config_));
}

json HttpTransport::post_json(const json& body) {
    const std::string payload = body.dump();
    return with_retries([&](httplib::Client& client) {
        return client.Post(endpoint_.path, payload, "application/json");
    });
}

json HttpTransport::post_multipart(const std::vector<FilePart>& parts) {
    httplib::MultipartFormDataItems items;
    for (const auto& p : parts) items.push_back({p.name, p.content, p.filename, p.content_type});
    return with_retries([&](httplib::Client& client) { return client.Post(endpoint_.path, items); });
}

RemoteTranscriber::RemoteTranscriber(GatewayConfig config)
    : Transcriber(config), transport_(std::move(config), "transcription") {}

std::vector<TranscriptSegment> RemoteTranscriber::do_transcribe(const AudioInput& audio) {
    std::vector<HttpTransport::FilePart> parts{
        {"file", std::string(audio.bytes.begin(), audio.bytes.end()), audio.filename,
         audio.mime_type},
        {"model", config().model_name, "", ""},
        {"response_format", "verbose_json", "", ""},
        {"timestamp_granularities[]", "segment", "", ""},
    };
    return parse_transcription_response(transport_.post_multipart(parts));
}

RemoteCaptioner::RemoteCaptioner(GatewayConfig config)
    : Captioner(config), transport_(std::move(config), "captioning") {}

std::string RemoteCaptioner::do_caption(const EncodedImage& panel, std::string_view dialogue,
                                        std::string_view instruction) {
    return parse_chat_response(
        transport_.post_json(build_caption_request(panel, dialogue, instruction, config())));
}

RemoteChatModel::RemoteChatModel(GatewayConfig config)
    : ChatModel(config), transport_(std::move(config), "chat") {}

std::string RemoteChatModel::do_complete(const ChatExchange& exchange) {
    return parse_chat_response(transport_.post_json(build_chat_request(exchange, config())));
}

RemoteEmbedder::RemoteEmbedder(GatewayConfig config)
    : Embedder(config), transport_(std::move(config), "embedding") {}

EmbeddingVector RemoteEmbedder::do_embed(std::string_view text) {
    EmbeddingVector v = parse_embedding_response(transport_.post_json(build_embedding_request(text, config())));
    std::size_t expected = 0;
    dimension_.compare_exchange_strong(expected, v.dimension());
    return v;
}

}  // namespace commentsim::gateway
