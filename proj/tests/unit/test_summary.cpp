#include "commentsim/error.hpp"
#include "commentsim/gateway/mock.hpp"
#include "commentsim/summary/summary.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace commentsim;
using namespace commentsim::summary;

namespace {

video::VideoAsset asset() {
    video::VideoAsset a;
    a.video_id = "v_test";
    a.title = "Garlic bread in space";
    a.duration = 60;
    return a;
}

}  // namespace

TEST(Summary, InterleavePutsCaptionsFirstOnTies) {
    std::vector<video::FrameCaption> caps{{3.0, "cap3"}, {7.0, "cap7"}};
    std::vector<gateway::TranscriptSegment> tr{{0.0, 2.0, "n0"}, {3.0, 4.0, "n3"}, {8.0, 9.0, "n8"}};
    const auto t = interleave(caps, tr);
    std::vector<std::string> texts;
    for (const auto& e : t) texts.push_back(e.text);
    EXPECT_EQ(texts, (std::vector<std::string>{"n0", "cap3", "n3", "cap7", "n8"}));
}

TEST(Summary, InterleaveIsSortedOnRandomInput) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> ts(0, 20);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<video::FrameCaption> caps;
        std::vector<gateway::TranscriptSegment> tr;
        for (int i = 0; i < 6; ++i) caps.push_back({static_cast<double>(ts(rng)), "c"});
        for (int i = 0; i < 6; ++i) {
            const double s = ts(rng);
            tr.push_back({s, s + 1, "n"});
        }
        const auto t = interleave(caps, tr);
        ASSERT_EQ(t.size(), 12u);
        for (std::size_t i = 1; i < t.size(); ++i) {
            ASSERT_LE(t[i - 1].timestamp, t[i].timestamp);
            if (t[i - 1].timestamp == t[i].timestamp) {
                ASSERT_FALSE(t[i - 1].kind == TimelineEntry::Kind::narration &&
                             t[i].kind == TimelineEntry::Kind::caption);
            }
        }
    }
}

TEST(Summary, PromptHasMetadataAndTimeline) {
    std::vector<video::FrameCaption> caps{{3.0, "a kitchen"}};
    std::vector<gateway::TranscriptSegment> tr{{0.0, 2.0, "hello there"}};
    const auto ex = build_summary_prompt(caps, tr, asset(), 200000);
    const auto& body = ex.last_user_message();
    EXPECT_EQ(body.rfind("[SUMMARIZE]", 0), 0u);
    EXPECT_NE(body.find("Title: Garlic bread in space"), std::string::npos);
    EXPECT_LT(body.find("NARRATION: hello there"), body.find("CAPTION: a kitchen"));
    EXPECT_DOUBLE_EQ(ex.temperature, 0.0);
}

TEST(Summary, PromptRejectsUnsortedCaptions) {
    std::vector<video::FrameCaption> caps{{5.0, "b"}, {1.0, "a"}};
    EXPECT_THROW(build_summary_prompt(caps, {}, asset(), 200000), Error);
}

TEST(Summary, BudgetOverflowIsReportedBeforeAnyCall) {
    std::vector<video::FrameCaption> caps;
    for (int i = 0; i < 2000; ++i) caps.push_back({static_cast<double>(i), std::string(500, 'x')});
    try {
        build_summary_prompt(caps, {}, asset(), 200000);
        FAIL();
    } catch (const BudgetError& e) {
        EXPECT_GT(e.estimated(), 200000);
        EXPECT_EQ(e.budget(), 200000);
    }
}

TEST(Summary, KeywordNormalization) {
    const auto k = normalize_keywords({"  Garlic Bread ", "garlic bread", "", "1. Space", "\"Astronaut\"",
                                       "one two three four five six seven"});
    EXPECT_EQ(k, (std::vector<std::string>{"garlic bread", "space", "astronaut"}));
    std::vector<std::string> many;
    for (int i = 0; i < 30; ++i) many.push_back("k" + std::to_string(i));
    EXPECT_EQ(normalize_keywords(many).size(), kMaxKeywords);
}

TEST(Summary, ParseCompletion) {
    const auto p = parse_summary_completion("Sure!\n**SUMMARY:** A chef bakes.\nIt floats.\nKEYWORDS: bread, Space, bread\n\nThanks");
    EXPECT_EQ(p.summary_text, "A chef bakes.\nIt floats.");
    EXPECT_EQ(p.keywords, (std::vector<std::string>{"bread", "space"}));
    EXPECT_THROW(parse_summary_completion("no blocks here"), ParseError);
    EXPECT_THROW(parse_summary_completion("SUMMARY: x"), ParseError);
    EXPECT_THROW(parse_summary_completion("SUMMARY:\nKEYWORDS: a"), ParseError);
}

TEST(Summary, RoundTripRender) {
    VideoSummary s{"A video about bread.", {"bread", "oven", "flour", "yeast", "crust"}, "v"};
    const auto p = parse_summary_completion(render_summary_completion(s));
    EXPECT_EQ(p.summary_text, s.summary_text);
    EXPECT_EQ(p.keywords, s.keywords);
}

TEST(Summary, RetriesOnceOnMalformedReply) {
    gateway::MockChatModel chat(gateway::GatewayConfig{});
    chat.push_scripted("I cannot comply");
    chat.push_scripted("SUMMARY: fine\nKEYWORDS: a, b, c, d, e");
    const auto ex = build_summary_prompt({}, {}, asset(), 200000);
    const auto s = summarize(ex, chat, "v_test");
    EXPECT_EQ(s.summary_text, "fine");
    EXPECT_EQ(s.source_video, "v_test");
    EXPECT_EQ(chat.call_count(), 2u);

    chat.push_scripted("bad");
    chat.push_scripted("still bad");
    EXPECT_THROW(summarize(ex, chat, "v_test"), ParseError);
}

TEST(Summary, MockSummaryIsParseable) {
    gateway::MockChatModel chat(gateway::GatewayConfig{});
    const auto s = summarize(build_summary_prompt({}, {}, asset(), 200000), chat, "v_test");
    EXPECT_FALSE(s.summary_text.empty());
    EXPECT_GE(s.keywords.size(), 1u);
    EXPECT_EQ(chat.call_count(), 1u);
}
