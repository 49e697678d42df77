#include "commentsim/cli/cli.hpp"
#include "commentsim/service/service.hpp"
#include "commentsim/util/fs.hpp"

#include "fixture_video.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using commentsim::testing::TempDir;
namespace util = commentsim::util;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = commentsim::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string personas_path() { return std::string(COMMENTSIM_FIXTURE_DIR) + "/personas.txt"; }

}  // namespace

TEST(Cli, VersionAndUsage) {
    EXPECT_EQ(cli({"--version"}).code, 0);
    EXPECT_NE(cli({}).code, 0);
    EXPECT_EQ(cli({"frobnicate"}).code, 2);
}

TEST(Cli, PipelineRunPrintsManifest) {
    TempDir dir;
    commentsim::testing::write_fixture_video(dir / "clip.avi", 6.0);
    const auto r = cli({"--mock", "--seed", "7", "--work-dir", (dir / "work").string(), "--personas",
                        personas_path(), "pipeline", "run", "--video", (dir / "clip.avi").string(), "--title",
                        "Garlic bread", "--count", "10"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto manifest = nlohmann::json::parse(r.out);
    EXPECT_EQ(manifest["rng_seed"], 7);
    EXPECT_EQ(manifest["comment_count"], 10);
    EXPECT_NE(r.err.find("[generating_comments] 100%"), std::string::npos);

    const auto more = cli({"--mock", "--seed", "7", "--work-dir", (dir / "work").string(), "--personas",
                           personas_path(), "generate", "--video-id", manifest["video_id"], "--count", "4"});
    ASSERT_EQ(more.code, 0) << more.err;
    EXPECT_TRUE(std::filesystem::exists(dir / "work" / manifest["video_id"].get<std::string>() / "comments" /
                                        "batch_0001.json"));
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    util::write_atomic(dir / "junk.mp4", std::string_view("not a video"));
    EXPECT_EQ(cli({"--mock", "pipeline", "run", "--video", (dir / "missing.mp4").string(), "--title", "t"}).code, 2);
    const auto media = cli({"--mock", "--work-dir", (dir / "w").string(), "--personas", personas_path(), "pipeline",
                            "run", "--video", (dir / "junk.mp4").string(), "--title", "t"});
    EXPECT_EQ(media.code, 2);
    EXPECT_NE(media.err.find("error (media)"), std::string::npos);
    commentsim::testing::write_fixture_video(dir / "clip.avi", 2.0);
    const auto no_personas = cli({"--mock", "--work-dir", (dir / "w").string(), "pipeline", "run", "--video",
                                  (dir / "clip.avi").string(), "--title", "t"});
    EXPECT_EQ(no_personas.code, 2);
    EXPECT_NE(no_personas.err.find("error (config)"), std::string::npos);
}

TEST(Cli, BudgetOverflowExitsWithFour) {
    TempDir dir;
    commentsim::testing::write_fixture_video(dir / "clip.avi", 4.0);
    {
        std::ofstream cfg(dir / "tiny.yaml");
        cfg << "gateways:\n  chat:\n    context_budget: 20\n";
    }
    const auto r = cli({"--config", (dir / "tiny.yaml").string(), "--work-dir", (dir / "w").string(),
                        "--personas", personas_path(), "pipeline", "run", "--video", (dir / "clip.avi").string(),
                        "--title", "t"});
    EXPECT_EQ(r.code, 4) << r.err;
    EXPECT_NE(r.err.find("error (budget)"), std::string::npos);
}

TEST(Cli, EvalMalformedLineIsNamed) {
    TempDir dir;
    {
        std::ofstream(dir / "bad.jsonl") << "{\"body\": \"fine\"}\n{\"body\": 3}\n";
    }
    const auto r = cli({"--mock", "eval", "--corpus", "bad=" + (dir / "bad.jsonl").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos);
    EXPECT_EQ(cli({"--mock", "eval", "--corpus", "nolabel"}).code, 2);
}

TEST(Cli, EvalWithoutSummaryReportsDiversityOnly) {
    TempDir dir;
    {
        std::ofstream(dir / "a.txt") << "garlic bread is great\nspace bread\nwow\n";
        std::ofstream(dir / "b.txt") << "nice\nnice video\n";
    }
    const auto r = cli({"--mock", "eval", "--corpus", "a=" + (dir / "a.txt").string(), "--corpus",
                        "b=" + (dir / "b.txt").string(), "--out", (dir / "report.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = nlohmann::json::parse(r.out);
    for (const auto& row : report["rows"]) {
        EXPECT_EQ(row["metric_name"].get<std::string>().find("relevance"), std::string::npos);
    }
    const auto csv = util::read_text(dir / "report.csv");
    EXPECT_EQ(csv.rfind("Group,a,b,params", 0), 0u);
}

TEST(Cli, SharesArtifactsWithService) {
    TempDir dir;
    commentsim::testing::write_fixture_video(dir / "clip.avi", 6.0);
    commentsim::pipeline::AppConfig config;
    config.seed = 7;
    config.paths.work_dir = dir / "svc";
    config.paths.database = dir / "svc.db";
    config.paths.persona_file = personas_path();
    commentsim::service::Service svc(config, commentsim::gateway::make_gateways({}));
    svc.start();
    commentsim::service::UploadRequest u;
    u.filename = "clip.avi";
    u.file_bytes = util::read_text(dir / "clip.avi");
    u.title = "Garlic bread";
    u.count = 12;
    const auto created = svc.create_video(u);
    ASSERT_EQ(svc.wait_for_job(created.job.job_id, std::chrono::seconds(60)).stage,
              commentsim::service::JobStage::done);
    svc.stop();

    const auto& id = created.video.video_id;
    const auto r = cli({"--mock", "--seed", "7", "--work-dir", (dir / "cli").string(), "--personas",
                        personas_path(), "pipeline", "run", "--video", (dir / "clip.avi").string(), "--title",
                        "Garlic bread", "--video-id", id, "--count", "12"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const auto* name : {"transcript.json", "captions.json", "summary.json", "ranking.json",
                             "comments/batch_0000.json"}) {
        EXPECT_EQ(util::read_text(dir / "svc" / id / name), util::read_text(dir / "cli" / id / name)) << name;
    }
}
