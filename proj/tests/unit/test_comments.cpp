#include "commentsim/comments/comments.hpp"
#include "commentsim/error.hpp"
#include "commentsim/gateway/mock.hpp"
#include "commentsim/util/hash.hpp"
#include "commentsim/util/text.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

using namespace commentsim;
using namespace commentsim::comments;

namespace {

VideoContext context() {
    VideoContext c;
    c.video_id = "v_ctx";
    c.title = "Garlic bread in space";
    c.description = "We bake bread in orbit.";
    c.author = "chef";
    c.summary = {"An astronaut bakes garlic bread.", {"garlic bread", "space", "baking"}, "v_ctx"};
    return c;
}

std::vector<persona::Persona> personas(std::size_t n) {
    std::vector<persona::Persona> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(persona::make_persona("I am persona number " + std::to_string(i) + ".",
                                            persona::PersonaSource::dataset));
    }
    return out;
}

EngineSettings settings(std::size_t parallelism = 4) {
    EngineSettings s;
    s.identities = make_identity_pool(builtin_names(), 7);
    s.clock = std::make_shared<util::LogicalClock>();
    s.parallelism = parallelism;
    return s;
}

}  // namespace

TEST(Comments, PlanBatchSweep) {
    for (std::size_t n = 1; n <= 200; ++n) {
        const auto plan = plan_batch(n);
        const auto expected = std::max<long>(1, std::lround(static_cast<double>(n) * 7 / 10.0));
        ASSERT_EQ(plan.primary_count, static_cast<std::size_t>(expected)) << n;
        ASSERT_EQ(plan.primary_count + plan.thread_count, n);
        ASSERT_LE(plan.thread_count, plan.primary_count);
    }
    EXPECT_EQ(plan_batch(30), (CommentBatchPlan{30, 21, 9}));
    EXPECT_EQ(plan_batch(1), (CommentBatchPlan{1, 1, 0}));
    EXPECT_EQ(plan_batch(5).primary_count, 4u);
    EXPECT_THROW(plan_batch(0), Error);
}

TEST(Comments, ValidateLocalInvariants) {
    Comment c;
    c.comment_id = "c_1";
    c.video_id = "v";
    c.body = "hello";
    EXPECT_NO_THROW(validate_comment(c));
    c.body = " ";
    EXPECT_THROW(validate_comment(c), Error);
    c.body = std::string(2001, 'x');
    EXPECT_THROW(validate_comment(c), Error);
    c.body = "ok";
    c.parent_id = "c_0";
    EXPECT_THROW(validate_comment(c), Error);
    c.kind = CommentKind::thread;
    EXPECT_NO_THROW(validate_comment(c));
    c.parent_id.reset();
    EXPECT_THROW(validate_comment(c), Error);
}

TEST(Comments, KindStrings) {
    for (auto k : {CommentKind::primary, CommentKind::thread, CommentKind::reply, CommentKind::custom_persona,
                   CommentKind::creator_reply}) {
        EXPECT_EQ(comment_kind_from_string(to_string(k)), k);
    }
    EXPECT_THROW(comment_kind_from_string("bogus"), Error);
}

TEST(Comments, IdentityIsDeterministic) {
    const auto pool = make_identity_pool({"Ann", "Bob", "Ann", " Cy "}, 3);
    EXPECT_EQ(pool.names, (std::vector<std::string>{"Ann", "Bob", "Cy"}));
    const auto a = assign_identity(pool, "c_1");
    EXPECT_EQ(a.author_name, assign_identity(pool, "c_1").author_name);
    EXPECT_EQ(a.avatar_seed, util::content_hash("c_1"));
    EXPECT_THROW(make_identity_pool({" "}, 1), Error);
    std::set<std::string> used;
    for (int i = 0; i < 200; ++i) used.insert(assign_identity(pool, "c_" + std::to_string(i)).author_name);
    EXPECT_EQ(used.size(), 3u);
}

TEST(Comments, NamesParsing) {
    EXPECT_EQ(parse_names("Emma,F,20355\n# comment\nLiam,M,19837\n\nNoah\n"),
              (std::vector<std::string>{"Emma", "Liam", "Noah"}));
    EXPECT_GE(builtin_names().size(), 50u);
}

TEST(Comments, CommentIdsDifferByScopeAndOrdinal) {
    EXPECT_NE(make_comment_id("v", "b0", 1), make_comment_id("v", "b0", 2));
    EXPECT_NE(make_comment_id("v", "b0", 1), make_comment_id("v", "b1", 1));
    EXPECT_EQ(make_comment_id("v", "b0", 1), make_comment_id("v", "b0", 1));
}

TEST(Comments, CleanBody) {
    EXPECT_EQ(clean_body("  \"Great   video!\"  "), "Great video!");
    EXPECT_EQ(clean_body("\xE2\x80\x9C" "curly" "\xE2\x80\x9D"), "curly");
    EXPECT_EQ(clean_body("\"\""), "");
    EXPECT_EQ(util::utf8_length(clean_body(std::string(3000, 'a'))), kMaxBodyChars);
}

TEST(Comments, PromptStructure) {
    const auto ctx = context();
    const auto p = personas(1);
    PromptSettings s;
    const auto with = build_primary_prompt(ctx, &p[0], s);
    const auto& body = with.last_user_message();
    EXPECT_EQ(body.rfind("[COMMENT]", 0), 0u);
    const auto fewshot_at = body.find(s.fewshot.front());
    const auto persona_at = body.find(p[0].text);
    const auto title_at = body.find("Garlic bread in space");
    const auto summary_at = body.find("An astronaut bakes garlic bread.");
    const auto keywords_at = body.find("garlic bread, space, baking");
    ASSERT_NE(persona_at, std::string::npos);
    EXPECT_LT(fewshot_at, persona_at);
    EXPECT_LT(persona_at, title_at);
    EXPECT_LT(title_at, summary_at);
    EXPECT_LT(summary_at, keywords_at);
    EXPECT_DOUBLE_EQ(with.temperature, 1.0);

    const auto without = build_primary_prompt(ctx, nullptr, s);
    EXPECT_EQ(without.last_user_message().find("Your persona"), std::string::npos);

    Comment parent;
    parent.body = "The crust looked amazing";
    const auto thread = build_thread_prompt(ctx, parent, &p[0], s);
    EXPECT_NE(thread.last_user_message().find("The crust looked amazing"), std::string::npos);

    const auto reply = build_reply_prompt(ctx, parent, "Thanks, it took three tries!", &p[0], s);
    EXPECT_NE(reply.last_user_message().find("Thanks, it took three tries!"), std::string::npos);

    s.context_budget = 5;
    EXPECT_THROW(build_primary_prompt(ctx, nullptr, s), BudgetError);
}

TEST(Comments, BatchHasQuotaAndValidForest) {
    gateway::MockChatModel chat(gateway::GatewayConfig{});
    CommentEngine engine(chat, settings());
    const auto ps = personas(30);
    CommentEngine::BatchRequest req;
    req.plan = plan_batch(30);
    req.personas = ps;
    req.seed = 7;
    const auto batch = engine.generate_batch(context(), req);
    ASSERT_EQ(batch.size(), 30u);
    std::map<std::string, const Comment*> by_id;
    std::size_t primaries = 0;
    for (const auto& c : batch) {
        by_id[c.comment_id] = &c;
        EXPECT_NO_THROW(validate_comment(c));
        EXPECT_TRUE(c.persona_id.has_value());
        if (c.kind == CommentKind::primary) ++primaries;
    }
    EXPECT_EQ(by_id.size(), 30u);
    EXPECT_EQ(primaries, 21u);
    std::set<std::string> parents;
    for (const auto& c : batch) {
        if (c.kind != CommentKind::thread) continue;
        ASSERT_TRUE(c.parent_id);
        ASSERT_TRUE(by_id.count(*c.parent_id));
        EXPECT_EQ(by_id[*c.parent_id]->kind, CommentKind::primary);
        EXPECT_NE(by_id[*c.parent_id]->persona_id, c.persona_id);
        parents.insert(*c.parent_id);
    }
    EXPECT_EQ(parents.size(), 9u);
    for (std::size_t i = 1; i < batch.size(); ++i) EXPECT_LT(batch[i - 1].created_at, batch[i].created_at);
}

TEST(Comments, BatchIndependentOfParallelism) {
    const auto ps = personas(12);
    std::vector<std::vector<Comment>> runs;
    for (std::size_t par : {1u, 3u, 8u}) {
        gateway::MockChatModel chat(gateway::GatewayConfig{});
        CommentEngine engine(chat, settings(par));
        CommentEngine::BatchRequest req;
        req.plan = plan_batch(20);
        req.personas = ps;
        req.seed = 11;
        runs.push_back(engine.generate_batch(context(), req));
    }
    EXPECT_EQ(runs[0], runs[1]);
    EXPECT_EQ(runs[0], runs[2]);
}

TEST(Comments, NoPersonaBatch) {
    gateway::MockChatModel chat(gateway::GatewayConfig{});
    CommentEngine engine(chat, settings());
    CommentEngine::BatchRequest req;
    req.plan = plan_batch(10);
    req.no_persona = true;
    for (const auto& c : engine.generate_batch(context(), req)) EXPECT_FALSE(c.persona_id.has_value());
}

TEST(Comments, ThreadParentsAreDistinctAndSeeded) {
    const auto plan = plan_batch(30);
    const auto a = choose_thread_parents(plan, 1, "v", 0);
    EXPECT_EQ(a.size(), 9u);
    EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 9u);
    for (auto i : a) EXPECT_LT(i, 21u);
    EXPECT_EQ(a, choose_thread_parents(plan, 1, "v", 0));
    EXPECT_NE(a, choose_thread_parents(plan, 2, "v", 0));
}

TEST(Comments, ReplyAndCustomFlow) {
    gateway::MockChatModel chat(gateway::GatewayConfig{});
    CommentEngine engine(chat, settings());
    const auto ps = personas(2);
    const auto ctx = context();
    const auto primary = engine.generate_primary(ctx, &ps[0], "c_p");
    EXPECT_EQ(primary.kind, CommentKind::primary);
    const auto creator = engine.make_creator_reply(primary, "Thanks!", "c_cr");
    EXPECT_EQ(creator.kind, CommentKind::creator_reply);
    EXPECT_EQ(creator.author_name, kCreatorName);
    EXPECT_EQ(creator.parent_id, primary.comment_id);
    EXPECT_FALSE(creator.generated());
    const auto reply = engine.generate_reply(ctx, primary, creator, &ps[0], "c_r");
    EXPECT_EQ(reply.kind, CommentKind::reply);
    EXPECT_EQ(reply.parent_id, creator.comment_id);
    EXPECT_EQ(reply.persona_id, primary.persona_id);
    EXPECT_THROW(engine.make_creator_reply(primary, "  ", "c_x"), Error);

    const auto custom = engine.generate_custom(ctx, "I am a retired astronaut.", "c_cu");
    EXPECT_EQ(custom.comment.kind, CommentKind::custom_persona);
    EXPECT_FALSE(custom.comment.parent_id);
    EXPECT_EQ(custom.persona.source, persona::PersonaSource::user_defined);
    EXPECT_EQ(custom.comment.persona_id, custom.persona.persona_id);
    EXPECT_THROW(engine.generate_custom(ctx, std::string(1001, 'x'), "c_y"), Error);

    EXPECT_THROW(engine.generate_thread(ctx, creator, &ps[1], "c_t"), Error);
}

TEST(Comments, EmptyModelOutputIsRetriedThenFails) {
    gateway::MockChatModel chat(gateway::GatewayConfig{});
    CommentEngine engine(chat, settings());
    chat.push_scripted("\"\"");
    chat.push_scripted("Real comment");
    EXPECT_EQ(engine.generate_primary(context(), nullptr, "c_1").body, "Real comment");
    chat.push_scripted("  ");
    chat.push_scripted("\"\"");
    try {
        engine.generate_primary(context(), nullptr, "c_2");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::generation);
    }
}
