#include "commentsim/gateway/mock.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/hash.hpp"
#include "commentsim/util/rng.hpp"
#include "commentsim/util/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

namespace commentsim::gateway {

std::vector<TranscriptSegment> MockTranscriber::do_transcribe(const AudioInput& audio) {
    if (audio.format == AudioFormat::pcm_s16le) {
        if (audio.bytes.size() % 2 != 0) {
            throw Error(ErrorKind::input, "PCM audio has an odd number of bytes");
        }
        const bool silent = std::all_of(audio.bytes.begin(), audio.bytes.end(),
                                        [](std::uint8_t b) { return b == 0; });
        if (silent) return {};
    }
    if (!(audio.duration > 0.0)) {
        throw Error(ErrorKind::input, "audio duration must be positive");
    }
    return {TranscriptSegment{0.0, audio.duration,
                              "mock transcript " + util::content_hash(audio.bytes)}};
}

std::string MockCaptioner::do_caption(const EncodedImage& panel, std::string_view dialogue,
                                      std::string_view /*instruction*/) {
    std::string words = util::first_words(dialogue, 8);
    if (words.empty()) words = std::string(kNoDialogue);
    return fmt::format("mock caption for panel {} with dialogue {}", util::content_hash(panel.bytes),
                       words);
}

namespace {

constexpr std::array<std::string_view, 5> kFallbackKeywords = {
    "video", "creator", "highlights", "tutorial", "review"};

constexpr std::array<std::string_view, 24> kStopwords = {
    "the", "and", "for", "with", "that", "this", "from", "your", "you", "are", "was", "how",
    "what", "why", "who", "its", "our", "into", "out", "not", "but", "all", "can", "has"};

constexpr std::array<std::string_view, 48> kWordBank = {
    "honestly", "this",     "part",      "really",  "made",     "my",       "day",     "love",
    "how",      "you",      "explained", "the",     "ending",   "was",      "so",      "good",
    "cannot",   "believe",  "it",        "worked",  "first",    "time",     "watching", "again",
    "tomorrow", "great",    "editing",   "music",   "fits",     "perfectly", "who",    "else",
    "came",     "here",     "after",     "trying",  "at",       "home",     "thanks",  "for",
    "sharing",  "subscribed", "instantly", "wow",   "details",  "matter",   "camera",  "work"};

std::string title_from_prompt(std::string_view prompt) {
    for (const auto& line : util::split(prompt, '\n')) {
        if (util::starts_with_icase(line, "Title:")) {
            return std::string(util::trim(std::string_view(line).substr(6)));
        }
    }
    return {};
}

std::vector<std::string> keywords_from_title(std::string_view title) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        const bool stop = std::find(kStopwords.begin(), kStopwords.end(), current) != kStopwords.end();
        if (current.size() >= 3 && !stop &&
            std::find(words.begin(), words.end(), current) == words.end()) {
            words.push_back(current);
        }
        current.clear();
    };
    for (char c : title) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            current.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            flush();
        }
    }
    flush();
    if (words.size() > 5) words.resize(5);
    for (auto fallback : kFallbackKeywords) {
        if (words.size() >= 5) break;
        if (std::find(words.begin(), words.end(), fallback) == words.end()) {
            words.emplace_back(fallback);
        }
    }
    return words;
}

std::string mock_summary(const ChatExchange& exchange) {
    const std::string title = title_from_prompt(exchange.render());
    const auto keywords = keywords_from_title(title);
    return fmt::format(
        "SUMMARY: Mock summary of \"{}\" (prompt {}). The video walks through its topic in "
        "chronological order.\nKEYWORDS: {}",
        title.empty() ? "untitled" : title, util::content_hash(exchange.render()),
        util::join(keywords, ", "));
}

std::string mock_comment(const ChatExchange& exchange) {
    auto rng = util::DeterministicRng::from_key(exchange.render());
    const auto length = 6 + rng.uniform_index(12);
    std::vector<std::string> words;
    words.reserve(length);
    for (std::uint64_t i = 0; i < length; ++i) {
        words.emplace_back(kWordBank[rng.uniform_index(kWordBank.size())]);
    }
    std::string body = util::join(words, " ");
    body[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(body[0])));
    return body + "!";
}

}  // namespace

std::string mock_chat_reply(const ChatExchange& exchange) {
    const std::string& last = exchange.last_user_message();
    if (last.find("[SUMMARIZE]") != std::string::npos) return mock_summary(exchange);
    if (last.find("[COMMENT]") != std::string::npos) return mock_comment(exchange);
    if (last.find("[JUDGE]") != std::string::npos) {
        return std::to_string(util::hash64(exchange.render()) % 101);
    }
    return "mock completion " + util::content_hash(exchange.render());
}

void MockChatModel::push_scripted(std::string reply) {
    std::lock_guard lock(mutex_);
    scripted_.push_back(std::move(reply));
}

std::string MockChatModel::do_complete(const ChatExchange& exchange) {
    {
        std::lock_guard lock(mutex_);
        if (!scripted_.empty()) {
            std::string reply = std::move(scripted_.front());
            scripted_.pop_front();
            return reply;
        }
    }
    return mock_chat_reply(exchange);
}

EmbeddingVector MockEmbedder::do_embed(std::string_view text) {
    util::DeterministicRng rng(util::hash64(text));
    EmbeddingVector v;
    v.values.resize(dimension());
    double sum = 0.0;
    for (double& x : v.values) {
        x = rng.next_signed_unit();
        sum += x * x;
    }
    const double norm = std::sqrt(sum);
    for (double& x : v.values) x /= norm;
    return v;
}

}  // namespace commentsim::gateway
