#include "commentsim/cli/cli.hpp"

#include "commentsim/error.hpp"
#include "commentsim/metrics/metrics.hpp"
#include "commentsim/pipeline/pipeline.hpp"
#include "commentsim/pipeline/serialize.hpp"
#include "commentsim/service/service.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/util/text.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <csignal>
#include <iostream>
#include <pthread.h>
#include <thread>

namespace commentsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool mock = false;
    std::string work_dir;
    std::string persona_file;
    std::string log_level = "info";
};

pipeline::AppConfig resolve_config(const GlobalOptions& g) {
    auto config = g.config_path.empty() ? pipeline::AppConfig{} : pipeline::load_config(g.config_path);
    if (g.mock) config.gateways = gateway::as_mock(config.gateways);
    if (g.seed) config.seed = *g.seed;
    if (!g.work_dir.empty()) config.paths.work_dir = g.work_dir;
    if (!g.persona_file.empty()) config.paths.persona_file = g.persona_file;
    config.validate();
    return config;
}

class StageReporter {
  public:
    explicit StageReporter(std::ostream& err) : err_(err) {}

    void operator()(pipeline::Stage stage, double fraction) {
        const int percent = static_cast<int>(fraction * 100.0);
        if (stage == last_stage_ && percent < last_percent_ + 10 && percent != 100) return;
        last_stage_ = stage;
        last_percent_ = percent;
        err_ << "[" << pipeline::to_string(stage) << "] " << percent << "%\n";
    }

  private:
    std::ostream& err_;
    std::optional<pipeline::Stage> last_stage_;
    int last_percent_ = -100;
};

int pipeline_run(const GlobalOptions& g, const std::string& video, const std::string& title,
                 const std::string& description, const std::string& author, const std::string& thumbnail,
                 const std::string& video_id, bool no_persona, std::optional<std::size_t> count, std::ostream& out,
                 std::ostream& err) {
    const auto config = resolve_config(g);
    pipeline::Pipeline pipe(config, gateway::make_gateways(config.gateways));
    std::vector<std::uint8_t> thumb;
    if (!thumbnail.empty()) thumb = util::read_bytes(thumbnail);
    const auto asset = video::load_asset(video, title, description, author, std::move(thumb), video_id);
    StageReporter reporter(err);
    pipeline::RunOptions options;
    options.no_persona = no_persona;
    options.count = count;
    options.on_progress = std::ref(reporter);
    const auto manifest = pipe.run(asset, options);
    err << "wrote " << pipe.workspace(asset.video_id).manifest().string() << "\n";
    out << manifest.to_json().dump(2) << "\n";
    return 0;
}

int persona_import(const GlobalOptions& g, const std::string& input, const std::string& output, std::ostream& out) {
    const auto config = resolve_config(g);
    fs::path target = output;
    if (target.empty()) {
        if (!config.paths.persona_file) {
            throw Error(ErrorKind::config, "no output given and no persona file configured");
        }
        target = *config.paths.persona_file;
    }
    const auto personas = persona::load_personas(input);
    persona::save_personas(target, personas);
    out << json{{"personas", personas.size()}, {"path", target.string()}}.dump() << "\n";
    return 0;
}

int persona_index(const GlobalOptions& g, std::ostream& out) {
    const auto config = resolve_config(g);
    if (!config.paths.persona_file) throw Error(ErrorKind::config, "no persona file configured");
    auto embedder = gateway::make_embedder(config.gateways.embedding);
    const auto personas = persona::load_personas(*config.paths.persona_file);
    const auto index = persona::build_index(personas, *embedder);
    const auto path = config.persona_index_path();
    index.save(path);
    out << json{{"personas", index.size()},
                {"model", index.model_name()},
                {"dimension", index.dimension()},
                {"path", path.string()}}
               .dump()
        << "\n";
    return 0;
}

int persona_query(const GlobalOptions& g, const std::vector<std::string>& keywords, std::size_t k,
                  std::ostream& out) {
    const auto config = resolve_config(g);
    pipeline::Pipeline pipe(config, gateway::make_gateways(config.gateways));
    const auto& index = pipe.persona_index();
    const auto ranked = persona::rank_personas(index, keywords, *pipe.gateways().embedder,
                                               {.k = k, .min_score = config.pipeline.min_score});
    json rows = json::array();
    for (const auto& r : ranked) {
        rows.push_back({{"persona_id", r.persona_id}, {"score", r.score}, {"text", pipe.persona_by_id(r.persona_id).text}});
    }
    out << rows.dump(2) << "\n";
    return 0;
}

int generate(const GlobalOptions& g, const std::string& video_id, std::optional<std::size_t> count,
             std::optional<std::size_t> batch, bool no_persona, std::ostream& out, std::ostream& err) {
    const auto config = resolve_config(g);
    pipeline::Pipeline pipe(config, gateway::make_gateways(config.gateways));
    const auto ws = pipe.workspace(video_id);
    const auto index = batch.value_or(ws.batch_count());
    const auto n = count.value_or(config.pipeline.batch_size);
    StageReporter reporter(err);
    const auto comments = pipe.generate(video_id, index, n, no_persona, [&](double f) {
        reporter(pipeline::Stage::generating_comments, f);
    });
    err << "wrote " << ws.batch(index).string() << "\n";
    out << pipeline::to_json_array(comments).dump(2) << "\n";
    return 0;
}

std::string read_summary_text(const fs::path& path) {
    const auto text = util::read_text(path);
    if (path.extension() == ".json") {
        const auto doc = pipeline::parse_artifact(text, path.string());
        if (doc.is_object() && doc.contains("summary_text")) return doc.at("summary_text").get<std::string>();
        if (doc.is_object() && doc.contains("summary")) return doc.at("summary").get<std::string>();
        throw Error(ErrorKind::input, path.string() + " has no summary_text field");
    }
    return text;
}

int eval(const GlobalOptions& g, const std::vector<std::string>& corpus_specs, const std::string& summary_path,
         const std::string& out_path, std::optional<std::size_t> equalized, bool no_judge, std::ostream& out) {
    const auto config = resolve_config(g);
    std::vector<metrics::CommentCorpus> corpora;
    for (const auto& spec : corpus_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw Error(ErrorKind::input, "corpus must be given as label=path, got '" + spec + "'");
        }
        corpora.push_back(metrics::load_corpus(spec.substr(0, eq), spec.substr(eq + 1)));
    }
    std::string summary;
    if (!summary_path.empty()) summary = read_summary_text(summary_path);
    auto gateways = gateway::make_gateways(config.gateways);
    metrics::EvalConfig eval_config;
    eval_config.bleu_max_n = config.eval.bleu_max_n;
    eval_config.max_pairs = config.eval.max_pairs;
    eval_config.judge_sample = config.eval.judge_sample;
    eval_config.seed = config.seed;
    eval_config.equalized_size = equalized;
    metrics::EvalBackends backends;
    backends.embedder = gateways.embedder.get();
    if (!no_judge) {
        for (auto& j : gateways.judges) backends.judges.push_back(j.get());
        if (backends.judges.empty()) backends.judges.push_back(gateways.chat.get());
    }
    const auto reports = metrics::evaluate(corpora, summary, eval_config, backends);
    if (!out_path.empty()) {
        metrics::write_report(out_path, reports);
        spdlog::info("wrote {}", out_path);
    }
    out << metrics::report_to_json(reports).dump(2) << "\n";
    return 0;
}

int serve(const GlobalOptions& g, const std::string& host, int port, std::ostream& err) {
    auto config = resolve_config(g);
    if (!host.empty()) config.service.host = host;
    if (port >= 0) config.service.port = port;

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::Service svc(config, gateway::make_gateways(config.gateways));
    svc.start();
    service::HttpServer http(svc);
    const int bound = http.bind(config.service.host, config.service.port);
    err << "listening on http://" << config.service.host << ":" << bound << "\n";

    std::jthread waiter([&](std::stop_token) {
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("received signal {}, shutting down", sig);
        http.stop();
    });
    http.listen();
    if (waiter.joinable()) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
    }
    svc.stop();
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Simulated viewer comments for videos", "commentsim"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pipeline::tool_version());

    GlobalOptions g;
    app.add_option("--config", g.config_path, "YAML configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for every random choice");
    app.add_flag("--mock", g.mock, "Force every backend to its mock");
    app.add_option("--work-dir", g.work_dir, "Override paths.work_dir");
    app.add_option("--personas", g.persona_file, "Override paths.persona_file");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

    auto* pipeline_cmd = app.add_subcommand("pipeline", "Process a video end to end");
    pipeline_cmd->require_subcommand(1);
    auto* run_cmd = pipeline_cmd->add_subcommand("run", "Run every stage and write the manifest");
    std::string video, title, description, author, thumbnail, video_id;
    bool no_persona = false;
    std::optional<std::size_t> count;
    run_cmd->add_option("--video", video, "Video file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--title", title, "Video title")->required();
    run_cmd->add_option("--description", description, "Video description");
    run_cmd->add_option("--author", author, "Channel author");
    run_cmd->add_option("--thumbnail", thumbnail, "Thumbnail image")->check(CLI::ExistingFile);
    run_cmd->add_option("--video-id", video_id, "Workspace id (defaults to a hash of the file)");
    run_cmd->add_flag("--no-persona", no_persona, "Ablation: generate without personas");
    run_cmd->add_option("--count", count, "Comments in the first batch")->check(CLI::PositiveNumber);

    auto* persona_cmd = app.add_subcommand("persona", "Manage the persona corpus");
    persona_cmd->require_subcommand(1);
    auto* import_cmd = persona_cmd->add_subcommand("import", "Normalize a persona dataset into JSON lines");
    std::string import_input, import_output;
    import_cmd->add_option("input", import_input, "Dataset file")->required()->check(CLI::ExistingFile);
    import_cmd->add_option("--output", import_output, "Destination (defaults to paths.persona_file)");
    auto* index_cmd = persona_cmd->add_subcommand("index", "Embed every persona and save the index");
    auto* query_cmd = persona_cmd->add_subcommand("query", "Rank personas against keywords");
    std::vector<std::string> keywords;
    std::size_t top_k = persona::kDefaultTopK;
    query_cmd->add_option("--keywords", keywords, "Comma-separated keywords")->required()->delimiter(',');
    query_cmd->add_option("-k,--top-k", top_k, "Number of personas")->check(CLI::PositiveNumber);

    auto* generate_cmd = app.add_subcommand("generate", "Generate another comment batch for a processed video");
    std::string gen_video;
    std::optional<std::size_t> gen_count, gen_batch;
    bool gen_no_persona = false;
    generate_cmd->add_option("--video-id", gen_video, "Workspace id")->required();
    generate_cmd->add_option("--count", gen_count, "Comments in the batch")->check(CLI::PositiveNumber);
    generate_cmd->add_option("--batch", gen_batch, "Batch index (defaults to the next one)");
    generate_cmd->add_flag("--no-persona", gen_no_persona, "Ablation: generate without personas");

    auto* eval_cmd = app.add_subcommand("eval", "Compute the metric battery over labeled corpora");
    std::vector<std::string> corpus_specs;
    std::string summary_path, out_path;
    std::optional<std::size_t> equalized;
    bool no_judge = false;
    eval_cmd->add_option("--corpus", corpus_specs, "label=path, repeatable")->required();
    eval_cmd->add_option("--summary", summary_path, "Summary text or summary.json")->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", out_path, "Report file (.json or .csv)");
    eval_cmd->add_option("--equalized-size", equalized, "Subsample size for equalized Self-BLEU");
    eval_cmd->add_flag("--no-judge", no_judge, "Skip the LLM relevance judges");

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    std::string host;
    int port = -1;
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--port", port, "Port (0 picks a free one)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : exit_code_for(ErrorKind::validation);
    }

    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("commentsim", sink);
    logger->set_pattern("%^%l%$: %v");
    logger->set_level(spdlog::level::from_str(g.log_level));
    auto previous = spdlog::default_logger();
    spdlog::set_default_logger(logger);
    struct RestoreLogger {
        std::shared_ptr<spdlog::logger> logger;
        ~RestoreLogger() { spdlog::set_default_logger(logger); }
    } restore{previous};

    try {
        if (run_cmd->parsed()) {
            return pipeline_run(g, video, title, description, author, thumbnail, video_id, no_persona, count, out,
                                err);
        }
        if (import_cmd->parsed()) return persona_import(g, import_input, import_output, out);
        if (index_cmd->parsed()) return persona_index(g, out);
        if (query_cmd->parsed()) return persona_query(g, keywords, top_k, out);
        if (generate_cmd->parsed()) return generate(g, gen_video, gen_count, gen_batch, gen_no_persona, out, err);
        if (eval_cmd->parsed()) return eval(g, corpus_specs, summary_path, out_path, equalized, no_judge, out);
        if (serve_cmd->parsed()) return serve(g, host, port, err);
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error (internal): " << e.what() << "\n";
        return exit_code_for(ErrorKind::internal);
    }
    return exit_code_for(ErrorKind::internal);
}

}  // namespace commentsim::cli
