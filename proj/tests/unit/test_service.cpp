#include "commentsim/error.hpp"
#include "commentsim/service/service.hpp"
#include "commentsim/util/fs.hpp"

#include "fixture_video.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <thread>

using namespace commentsim;
using namespace commentsim::service;
using commentsim::testing::TempDir;

namespace {

pipeline::AppConfig service_config(const TempDir& dir) {
    pipeline::AppConfig c;
    c.seed = 7;
    c.paths.work_dir = dir / "work";
    c.paths.database = dir / "service.db";
    c.paths.persona_file = std::filesystem::path(COMMENTSIM_FIXTURE_DIR) / "personas.txt";
    c.service.workers = 2;
    c.validate();
    return c;
}

std::string fixture_bytes(const TempDir& dir, double seconds = 8.0) {
    const auto path = dir / "fixture.avi";
    if (!std::filesystem::exists(path)) commentsim::testing::write_fixture_video(path, seconds);
    return util::read_text(path);
}

UploadRequest upload(const std::string& bytes, std::size_t count = 10) {
    UploadRequest u;
    u.filename = "clip.avi";
    u.file_bytes = bytes;
    u.title = "Garlic bread in space";
    u.description = "We bake bread in orbit.";
    u.author = "chef";
    u.count = count;
    return u;
}

std::size_t count_nodes(const std::vector<CommentNode>& nodes) {
    std::size_t n = 0;
    for (const auto& node : nodes) n += 1 + count_nodes(node.children);
    return n;
}

comments::Comment bare_comment(std::string id, std::string video, std::optional<std::string> parent = {}) {
    comments::Comment c;
    c.comment_id = std::move(id);
    c.video_id = std::move(video);
    c.body = "body";
    c.author_name = "A";
    c.avatar_seed = "s";
    c.created_at = "2000-01-01T00:00:00Z";
    if (parent) {
        c.kind = comments::CommentKind::thread;
        c.parent_id = std::move(parent);
    }
    return c;
}

}  // namespace

TEST(Store, ReferentialIntegrity) {
    TempDir dir;
    Store store(dir / "s.db");
    VideoRecord v;
    v.video_id = "v_1";
    v.title = "t";
    v.file_path = "f";
    v.upload_time = "2000-01-01T00:00:00Z";
    store.insert_video(v);
    EXPECT_THROW(store.insert_video(v), Error);

    const std::vector<comments::Comment> orphan{bare_comment("c_2", "v_1", "c_missing")};
    EXPECT_THROW(store.insert_comments(orphan, {}), Error);
    const std::vector<comments::Comment> wrong_video{bare_comment("c_3", "v_nope")};
    EXPECT_THROW(store.insert_comments(wrong_video, {}), Error);
    auto with_persona = bare_comment("c_4", "v_1");
    with_persona.persona_id = "p_unknown";
    const std::vector<comments::Comment> unknown{with_persona};
    EXPECT_THROW(store.insert_comments(unknown, {}), Error);
    EXPECT_EQ(store.comment_count("v_1"), 0u);

    const std::vector<comments::Comment> ok{bare_comment("c_1", "v_1"), bare_comment("c_5", "v_1", "c_1")};
    store.insert_comments(ok, {});
    store.insert_comments(ok, {});
    EXPECT_EQ(store.comment_count("v_1"), 2u);
}

TEST(Store, JobStagesOnlyMoveForward) {
    TempDir dir;
    Store store(dir / "s.db");
    VideoRecord v{"v_1", "t", "", "", "f", 1.0, "", "2000-01-01T00:00:00Z", false, std::nullopt};
    store.insert_video(v);
    JobRecord j;
    j.job_id = "j_1";
    j.video_id = "v_1";
    j.count = 5;
    j.created_at = "2000-01-01T00:00:00Z";
    store.insert_job(j);
    store.advance_job("j_1", JobStage::captioning, 0.4, "t1");
    const auto back = store.advance_job("j_1", JobStage::transcribing, 0.1, "t2");
    EXPECT_EQ(back.stage, JobStage::captioning);
    EXPECT_DOUBLE_EQ(back.progress, 0.4);
    EXPECT_EQ(store.unfinished_jobs().size(), 1u);
    EXPECT_TRUE(store.has_active_job("v_1"));
    const auto done = store.advance_job("j_1", JobStage::done, 0.0, "t3");
    EXPECT_DOUBLE_EQ(done.progress, 1.0);
    EXPECT_THROW(store.advance_job("j_1", JobStage::captioning, 0.5, "t4"), Error);
    EXPECT_TRUE(store.unfinished_jobs().empty());
}

TEST(Service, WeightedProgress) {
    pipeline::ProgressWeights w;
    EXPECT_DOUBLE_EQ(weighted_progress(w, pipeline::Stage::transcribing, 0.0), 0.0);
    EXPECT_NEAR(weighted_progress(w, pipeline::Stage::captioning, 0.5), 0.35, 1e-12);
    EXPECT_NEAR(weighted_progress(w, pipeline::Stage::generating_comments, 1.0), 1.0, 1e-12);
}

TEST(Service, UploadRunsJobAndServesForest) {
    TempDir dir;
    Service svc(service_config(dir), gateway::make_gateways({}));
    svc.start();
    const auto created = svc.create_video(upload(fixture_bytes(dir)));
    EXPECT_EQ(created.job.stage, JobStage::queued);
    const auto job = svc.wait_for_job(created.job.job_id, std::chrono::seconds(60));
    ASSERT_EQ(job.stage, JobStage::done) << job.error.value_or("");
    EXPECT_DOUBLE_EQ(job.progress, 1.0);
    std::vector<std::string> times;
    for (const auto& s : {"queued", "transcribing", "captioning", "summarizing", "ranking_personas",
                          "generating_comments", "done"}) {
        ASSERT_TRUE(job.stage_times.contains(s)) << s;
        times.push_back(job.stage_times[s].get<std::string>());
    }
    EXPECT_TRUE(std::is_sorted(times.begin(), times.end()));

    const auto forest = svc.list_comments(created.video.video_id);
    EXPECT_EQ(forest.size(), 7u);
    EXPECT_EQ(count_nodes(forest), 10u);
    for (const auto& root : forest) EXPECT_TRUE(root.persona_text.has_value());

    const auto target = forest.front().comment;
    const auto reply = svc.post_reply(target.comment_id, "Thanks for watching!");
    EXPECT_EQ(reply.user_node.parent_id, target.comment_id);
    EXPECT_EQ(reply.reply.parent_id, reply.user_node.comment_id);
    EXPECT_THROW(svc.post_reply(reply.user_node.comment_id, "again"), Error);
    EXPECT_THROW(svc.post_reply(target.comment_id, "  "), Error);

    const auto custom = svc.post_custom_persona(created.video.video_id, "I am a retired astronaut.");
    EXPECT_EQ(custom.kind, comments::CommentKind::custom_persona);

    const auto more = svc.request_more_comments(created.video.video_id, 5);
    ASSERT_EQ(svc.wait_for_job(more.job_id, std::chrono::seconds(60)).stage, JobStage::done);
    EXPECT_EQ(count_nodes(svc.list_comments(created.video.video_id)), 10u + 2u + 1u + 5u);
    EXPECT_EQ(svc.get_summary(created.video.video_id).summary.source_video, created.video.video_id);
    svc.stop();
}

TEST(Service, UploadValidation) {
    TempDir dir;
    Service svc(service_config(dir), gateway::make_gateways({}));
    auto u = upload(fixture_bytes(dir));
    u.title = " ";
    EXPECT_THROW(svc.create_video(u), Error);
    u = upload(fixture_bytes(dir));
    u.filename = "clip.yaml";
    try {
        svc.create_video(u);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(http_status_for(e.kind()), 415);
    }
    u = upload("garbage bytes");
    EXPECT_THROW(svc.create_video(u), Error);
    EXPECT_TRUE(svc.list_videos().empty());
    try {
        svc.get_video("v_nope");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(http_status_for(e.kind()), 404);
    }
}

TEST(Service, HttpRoutesAndAuth) {
    TempDir dir;
    ::setenv("COMMENTSIM_TEST_TOKEN", "s3cret-token", 1);
    auto config = service_config(dir);
    config.service.api_token_ref = "COMMENTSIM_TEST_TOKEN";
    Service svc(config, gateway::make_gateways({}));
    svc.start();
    HttpServer http(svc);
    const int port = http.bind("127.0.0.1", 0);
    std::thread server([&] { http.listen(); });

    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(30, 0);
    auto health = client.Get("/api/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);

    httplib::MultipartFormDataItems items{{"file", fixture_bytes(dir), "clip.avi", "video/x-msvideo"},
                                          {"title", "Garlic bread", "", ""},
                                          {"count", "6", "", ""}};
    auto denied = client.Post("/api/videos", items);
    ASSERT_TRUE(denied);
    EXPECT_EQ(denied->status, 401);
    EXPECT_EQ(denied->body.find("s3cret"), std::string::npos);

    const httplib::Headers auth{{"X-Api-Token", "s3cret-token"}};
    auto created = client.Post("/api/videos", auth, items);
    ASSERT_TRUE(created);
    ASSERT_EQ(created->status, 201) << created->body;
    const auto body = nlohmann::json::parse(created->body);
    const std::string video_id = body["video"]["video_id"];
    const std::string job_id = body["job"]["job_id"];
    ASSERT_EQ(svc.wait_for_job(job_id, std::chrono::seconds(60)).stage, JobStage::done);

    auto job = client.Get("/api/jobs/" + job_id);
    ASSERT_TRUE(job);
    EXPECT_EQ(nlohmann::json::parse(job->body)["stage"], "done");

    auto comments = client.Get("/api/videos/" + video_id + "/comments");
    ASSERT_TRUE(comments);
    const auto forest = nlohmann::json::parse(comments->body)["comments"];
    ASSERT_EQ(forest.size(), 4u);
    const std::string target = forest[0]["comment_id"];

    auto summary = client.Get("/api/videos/" + video_id + "/summary");
    ASSERT_TRUE(summary);
    EXPECT_EQ(summary->status, 200);
    EXPECT_TRUE(nlohmann::json::parse(summary->body).contains("keywords"));

    auto reply = client.Post("/api/comments/" + target + "/replies", auth, R"({"body": "Thanks!"})",
                             "application/json");
    ASSERT_TRUE(reply);
    EXPECT_EQ(reply->status, 201) << reply->body;

    auto bad_json = client.Post("/api/comments/" + target + "/replies", auth, "{oops", "application/json");
    ASSERT_TRUE(bad_json);
    EXPECT_EQ(bad_json->status, 400);

    auto empty_persona = client.Post("/api/videos/" + video_id + "/custom-persona", auth,
                                     R"({"persona_text": ""})", "application/json");
    ASSERT_TRUE(empty_persona);
    EXPECT_EQ(empty_persona->status, 422);

    auto more = client.Post("/api/videos/" + video_id + "/generate-more", auth, R"({"count": 3})",
                            "application/json");
    ASSERT_TRUE(more);
    EXPECT_EQ(more->status, 202);

    auto missing = client.Get("/api/videos/v_missing");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
    EXPECT_EQ(nlohmann::json::parse(missing->body)["error"]["kind"], "not_found");

    http.stop();
    server.join();
    svc.stop();
    ::unsetenv("COMMENTSIM_TEST_TOKEN");
}

TEST(Service, ResumesAfterCrashWithoutRepeatingStages) {
    TempDir dir;
    const auto config = service_config(dir);
    const auto bytes = fixture_bytes(dir);
    const pid_t pid = ::fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
        ServiceHooks hooks;
        hooks.after_stage = [](const std::string&, pipeline::Stage s) {
            if (s == pipeline::Stage::captioning) ::_exit(42);
        };
        Service svc(config, gateway::make_gateways({}), hooks);
        svc.start();
        const auto created = svc.create_video(upload(bytes));
        svc.wait_for_job(created.job.job_id, std::chrono::seconds(60));
        ::_exit(1);
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    ASSERT_TRUE(WIFEXITED(status));
    ASSERT_EQ(WEXITSTATUS(status), 42);

    auto gw = gateway::make_gateways({});
    Service svc(config, gw);
    const auto pending = svc.store().unfinished_jobs();
    ASSERT_EQ(pending.size(), 1u);
    svc.start();
    const auto job = svc.wait_for_job(pending[0].job_id, std::chrono::seconds(60));
    ASSERT_EQ(job.stage, JobStage::done) << job.error.value_or("");
    EXPECT_EQ(gw.transcriber->call_count(), 0u);
    EXPECT_EQ(gw.captioner->call_count(), 0u);
    EXPECT_EQ(count_nodes(svc.list_comments(job.video_id)), 10u);
    svc.stop();
}
