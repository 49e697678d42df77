#pragma once

#include "commentsim/gateway/gateway.hpp"
#include "commentsim/video/video.hpp"

#include <span>
#include <string>
#include <vector>

namespace commentsim::summary {

inline constexpr std::size_t kMaxKeywords = 15;
inline constexpr std::size_t kMinKeywords = 5;
inline constexpr std::size_t kMaxKeywordWords = 6;

struct VideoSummary {
    std::string summary_text;
    std::vector<std::string> keywords;  // distinct, lowercase, 1..15 entries
    std::string source_video;

    friend bool operator==(const VideoSummary&, const VideoSummary&) = default;
};

/// Timeline of captions and transcript segments, ascending by timestamp with
/// captions first on ties.
struct TimelineEntry {
    enum class Kind { caption, narration };
    Kind kind;
    double timestamp;
    std::string text;
};

std::vector<TimelineEntry> interleave(std::span<const video::FrameCaption> captions,
                                      std::span<const gateway::TranscriptSegment> transcript);

/// Prompt asking for a SUMMARY block and a KEYWORDS block. Throws
/// BudgetError when the prompt does not fit `context_budget`.
gateway::ChatExchange build_summary_prompt(std::span<const video::FrameCaption> captions,
                                           std::span<const gateway::TranscriptSegment> transcript,
                                           const video::VideoAsset& asset,
                                           std::int64_t context_budget,
                                           double temperature = 0.0);

/// Trim, case-fold, collapse spaces, drop empties and phrases over six words,
/// dedupe in first-seen order, clamp to 15.
std::vector<std::string> normalize_keywords(const std::vector<std::string>& raw);

struct ParsedSummary {
    std::string summary_text;
    std::vector<std::string> keywords;
};

/// Throws ParseError (carrying the raw text) if either block is missing or
/// empty after normalization.
ParsedSummary parse_summary_completion(const std::string& completion);

/// Inverse of parse_summary_completion for normalized summaries.
std::string render_summary_completion(const VideoSummary& summary);

/// Calls the chat backend and parses the reply. A reply without both blocks
/// gets one retry with a stricter instruction before the ParseError escapes.
VideoSummary summarize(const gateway::ChatExchange& prompt, gateway::ChatModel& chat,
                       const std::string& video_id);

}  // namespace commentsim::summary
