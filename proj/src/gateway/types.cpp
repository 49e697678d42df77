#include "commentsim/gateway/types.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/text.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace commentsim::gateway {

std::string_view to_string(BackendKind kind) noexcept {
    return kind == BackendKind::remote ? "remote" : "mock";
}

BackendKind backend_kind_from_string(std::string_view text) {
    if (text == "remote") return BackendKind::remote;
    if (text == "mock") return BackendKind::mock;
    throw Error(ErrorKind::config, fmt::format("unknown backend kind '{}'", text));
}

void GatewayConfig::validate(bool is_chat_backend) const {
    if (!(timeout_seconds > 0.0)) {
        throw Error(ErrorKind::config, "gateway timeout must be positive");
    }
    if (max_retries < 0) {
        throw Error(ErrorKind::config, "max_retries must be nonnegative");
    }
    if (is_chat_backend && context_budget <= 0) {
        throw Error(ErrorKind::config, "context_budget must be positive for chat backends");
    }
    if (backend == BackendKind::remote && endpoint_url.empty()) {
        throw Error(ErrorKind::config, "remote backend requires endpoint_url");
    }
    if (embedding_dimension <= 0) {
        throw Error(ErrorKind::config, "embedding_dimension must be positive");
    }
}

std::vector<TranscriptSegment> normalize_transcript(std::vector<TranscriptSegment> segments) {
    for (const auto& s : segments) {
        if (!std::isfinite(s.start) || !std::isfinite(s.end) || s.start < 0.0) {
            throw Error(ErrorKind::input,
                        fmt::format("transcript segment has invalid start {}", s.start));
        }
        if (!(s.start < s.end)) {
            throw Error(ErrorKind::input,
                        fmt::format("transcript segment ({}, {}) violates start < end", s.start,
                                    s.end));
        }
        if (util::is_blank(s.text)) {
            throw Error(ErrorKind::input,
                        fmt::format("transcript segment ({}, {}) has empty text", s.start, s.end));
        }
    }
    std::stable_sort(segments.begin(), segments.end(), [](const auto& a, const auto& b) {
        return a.start < b.start || (a.start == b.start && a.end < b.end);
    });
    std::vector<TranscriptSegment> out;
    out.reserve(segments.size());
    for (auto& s : segments) {
        if (!out.empty() && s.start < out.back().end) {
            s.start = out.back().end;
            if (!(s.start < s.end)) {
                out.back().text += " " + s.text;
                continue;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

void EmbeddingVector::validate() const {
    if (values.empty()) {
        throw Error(ErrorKind::input, "embedding vector is empty");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::input, "embedding vector contains a non-finite value");
        }
    }
}

double EmbeddingVector::norm() const {
    double sum = 0.0;
    for (double v : values) sum += v * v;
    return std::sqrt(sum);
}

std::string_view to_string(Role role) noexcept {
    return role == Role::user ? "user" : "assistant";
}

void ChatExchange::validate() const {
    if (messages.empty()) {
        throw Error(ErrorKind::input, "chat exchange has no messages");
    }
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const Role expected = (i % 2 == 0) ? Role::user : Role::assistant;
        if (messages[i].role != expected) {
            throw Error(ErrorKind::input,
                        fmt::format("chat message {} should have role {}", i, to_string(expected)));
        }
    }
    if (messages.back().role != Role::user) {
        throw Error(ErrorKind::input, "chat exchange must end with a user message");
    }
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw Error(ErrorKind::input, "temperature must lie in [0, 2]");
    }
}

std::string ChatExchange::render() const {
    std::string out;
    if (!system_instruction.empty()) {
        out += "[system]\n" + system_instruction + "\n";
    }
    for (const auto& m : messages) {
        out += fmt::format("[{}]\n{}\n", to_string(m.role), m.content);
    }
    return out;
}

const std::string& ChatExchange::last_user_message() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) return it->content;
    }
    throw Error(ErrorKind::input, "chat exchange has no user message");
}

std::int64_t estimate_tokens(std::string_view text) noexcept {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::int64_t estimate_tokens(const ChatExchange& exchange) noexcept {
    std::int64_t total = estimate_tokens(exchange.system_instruction);
    for (const auto& m : exchange.messages) total += estimate_tokens(m.content);
    return total;
}

}  // namespace commentsim::gateway
