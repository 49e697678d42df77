#include "commentsim/summary/summary.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/text.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace commentsim::summary {

namespace {

constexpr std::string_view kSystemInstruction =
    "You are a careful video analyst. You read a chronological timeline of frame captions and "
    "narration from one video, together with the creator's metadata, and write a faithful summary "
    "of what happens in the video.";

constexpr std::string_view kOutputInstruction =
    "Respond with exactly two blocks and nothing else:\n"
    "SUMMARY: <a faithful multi-sentence summary of the whole video>\n"
    "KEYWORDS: <5 to 15 comma-separated keyword phrases, each at most six words>";

constexpr std::string_view kRetryInstruction =
    "[SUMMARIZE] Your previous reply did not follow the required format. Reply again using "
    "exactly two lines: one starting with \"SUMMARY:\" and one starting with \"KEYWORDS:\" "
    "followed by comma-separated keyword phrases. Do not add anything else.";

std::string format_time(double seconds) {
    const auto total = static_cast<long>(seconds);
    return fmt::format("{:02}:{:02}:{:02}.{:01}", total / 3600, (total / 60) % 60, total % 60,
                       static_cast<int>((seconds - static_cast<double>(total)) * 10.0 + 1e-9));
}

std::string strip_decoration(std::string_view s) {
    s = util::trim(s);
    auto is_decor = [](char c) {
        return c == '"' || c == '\'' || c == '*' || c == '-' || c == '.' || c == '`' || c == '#';
    };
    while (!s.empty() && (is_decor(s.front()) || std::isspace(static_cast<unsigned char>(s.front())))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (is_decor(s.back()) || std::isspace(static_cast<unsigned char>(s.back())))) {
        s.remove_suffix(1);
    }
    // Numbered-list prefixes such as "3)" or "3.".
    std::size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits > 0 && digits < s.size() && (s[digits] == ')' || s[digits] == '.') &&
        digits + 1 < s.size() && s[digits + 1] == ' ') {
        s.remove_prefix(digits + 2);
    }
    return std::string(util::trim(s));
}

/// Offset just past a "LABEL:" marker at the start of a line, or npos.
std::size_t find_label(const std::string& text, std::string_view label, std::size_t from = 0) {
    std::size_t line_start = from;
    while (line_start <= text.size()) {
        std::size_t p = line_start;
        while (p < text.size() && (text[p] == ' ' || text[p] == '\t' || text[p] == '*' || text[p] == '#')) ++p;
        if (util::starts_with_icase(std::string_view(text).substr(p), label)) {
            std::size_t q = p + label.size();
            while (q < text.size() && text[q] == '*') ++q;
            if (q < text.size() && text[q] == ':') {
                ++q;
                while (q < text.size() && text[q] == '*') ++q;
                return q;
            }
        }
        const auto nl = text.find('\n', line_start);
        if (nl == std::string::npos) break;
        line_start = nl + 1;
    }
    return std::string::npos;
}

std::size_t line_start_of(const std::string& text, std::size_t pos) {
    const auto nl = text.rfind('\n', pos);
    return nl == std::string::npos ? 0 : nl + 1;
}

}  // namespace

std::vector<TimelineEntry> interleave(std::span<const video::FrameCaption> captions,
                                      std::span<const gateway::TranscriptSegment> transcript) {
    std::vector<TimelineEntry> entries;
    entries.reserve(captions.size() + transcript.size());
    for (const auto& c : captions) {
        entries.push_back({TimelineEntry::Kind::caption, c.timestamp, c.text});
    }
    for (const auto& s : transcript) {
        entries.push_back({TimelineEntry::Kind::narration, s.start, s.text});
    }
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return a.kind == TimelineEntry::Kind::caption && b.kind == TimelineEntry::Kind::narration;
    });
    return entries;
}

gateway::ChatExchange build_summary_prompt(std::span<const video::FrameCaption> captions,
                                           std::span<const gateway::TranscriptSegment> transcript,
                                           const video::VideoAsset& asset,
                                           std::int64_t context_budget, double temperature) {
    for (std::size_t i = 1; i < captions.size(); ++i) {
        if (captions[i].timestamp < captions[i - 1].timestamp) {
            throw Error(ErrorKind::input, "frame captions must be sorted by timestamp");
        }
    }
    std::string body = "[SUMMARIZE]\n";
    body += "Title: " + asset.title + "\n";
    body += "Author: " + (asset.author.empty() ? std::string("unknown") : asset.author) + "\n";
    body += "Description: " + (asset.description.empty() ? std::string("none") : asset.description) + "\n";
    body += fmt::format("Duration: {:.1f} s\n\nTimeline:\n", asset.duration);
    for (const auto& entry : interleave(captions, transcript)) {
        const char* label = entry.kind == TimelineEntry::Kind::caption ? "CAPTION" : "NARRATION";
        body += fmt::format("[{}] {}: {}\n", format_time(entry.timestamp), label,
                            util::collapse_whitespace(entry.text));
    }
    if (transcript.empty()) {
        body += "(no narration)\n";
    }
    body += "\n";
    body += kOutputInstruction;

    gateway::ChatExchange exchange;
    exchange.system_instruction = std::string(kSystemInstruction);
    exchange.messages.push_back({gateway::Role::user, std::move(body)});
    exchange.temperature = temperature;
    gateway::check_budget(exchange, context_budget);
    return exchange;
}

std::vector<std::string> normalize_keywords(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& item : raw) {
        std::string k = util::collapse_whitespace(util::to_lower_ascii(strip_decoration(item)));
        if (k.empty()) continue;
        if (util::split(k, ' ').size() > kMaxKeywordWords) continue;
        if (std::find(out.begin(), out.end(), k) != out.end()) continue;
        out.push_back(std::move(k));
        if (out.size() == kMaxKeywords) break;
    }
    return out;
}

ParsedSummary parse_summary_completion(const std::string& completion) {
    const auto summary_at = find_label(completion, "SUMMARY");
    if (summary_at == std::string::npos) {
        throw ParseError("completion has no SUMMARY block", completion);
    }
    const auto keywords_at = find_label(completion, "KEYWORDS", summary_at);
    if (keywords_at == std::string::npos) {
        throw ParseError("completion has no KEYWORDS block", completion);
    }
    const auto summary_end = line_start_of(completion, keywords_at - 1);
    ParsedSummary parsed;
    parsed.summary_text = std::string(util::trim(
        std::string_view(completion).substr(summary_at, summary_end - summary_at)));
    if (parsed.summary_text.empty()) {
        throw ParseError("SUMMARY block is empty", completion);
    }
    std::string keyword_block = completion.substr(keywords_at);
    // A blank line ends the keyword block.
    if (const auto blank = keyword_block.find("\n\n"); blank != std::string::npos) {
        keyword_block.resize(blank);
    }
    std::vector<std::string> raw;
    std::string current;
    for (char c : keyword_block) {
        if (c == ',' || c == ';' || c == '\n') {
            raw.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    raw.push_back(std::move(current));
    parsed.keywords = normalize_keywords(raw);
    if (parsed.keywords.empty()) {
        throw ParseError("KEYWORDS block is empty", completion);
    }
    return parsed;
}

std::string render_summary_completion(const VideoSummary& summary) {
    return "SUMMARY: " + summary.summary_text + "\nKEYWORDS: " + util::join(summary.keywords, ", ");
}

VideoSummary summarize(const gateway::ChatExchange& prompt, gateway::ChatModel& chat,
                       const std::string& video_id) {
    const std::string first = chat.complete(prompt);
    ParsedSummary parsed;
    try {
        parsed = parse_summary_completion(first);
    } catch (const ParseError& e) {
        spdlog::warn("summary reply unparseable ({}); retrying with a stricter instruction", e.what());
        gateway::ChatExchange retry = prompt;
        retry.messages.push_back({gateway::Role::assistant, first});
        retry.messages.push_back({gateway::Role::user, std::string(kRetryInstruction)});
        parsed = parse_summary_completion(chat.complete(retry));
    }
    if (parsed.keywords.size() < kMinKeywords) {
        spdlog::warn("summary has only {} keyword(s)", parsed.keywords.size());
    }
    return {std::move(parsed.summary_text), std::move(parsed.keywords), video_id};
}

}  // namespace commentsim::summary
