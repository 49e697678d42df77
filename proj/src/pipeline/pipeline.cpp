#include "commentsim/pipeline/pipeline.hpp"

#include "commentsim/error.hpp"
#include "commentsim/pipeline/serialize.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/util/hash.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

#include <fmt/format.h>

namespace commentsim::pipeline {

namespace fs = std::filesystem;

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::transcribing: return "transcribing";
        case Stage::captioning: return "captioning";
        case Stage::summarizing: return "summarizing";
        case Stage::ranking_personas: return "ranking_personas";
        case Stage::generating_comments: return "generating_comments";
    }
    return "transcribing";
}

Stage stage_from_string(std::string_view text) {
    for (auto s : kStages) {
        if (to_string(s) == text) return s;
    }
    throw Error(ErrorKind::input, fmt::format("unknown stage '{}'", text));
}

fs::path VideoWorkspace::batch(std::size_t index) const {
    return comments_dir() / fmt::format("batch_{:04d}.json", index);
}

std::size_t VideoWorkspace::batch_count() const {
    std::size_t n = 0;
    while (fs::exists(batch(n))) ++n;
    return n;
}

std::string tool_version() { return COMMENTSIM_VERSION; }

namespace {

void write_json(const fs::path& path, const json& doc) { util::write_atomic(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    return parse_artifact(util::read_text(path), path.filename().string());
}

StageOutput describe_output(const VideoWorkspace& ws, const fs::path& path) {
    return {fs::relative(path, ws.root).generic_string(), util::sha256_hex(util::read_text(path))};
}

std::map<std::string, std::uint64_t> call_counts(const gateway::Gateways& g) {
    std::map<std::string, std::uint64_t> counts = {
        {"transcription", g.transcriber->call_count()},
        {"captioning", g.captioner->call_count()},
        {"chat", g.chat->call_count()},
        {"embedding", g.embedder->call_count()}};
    return counts;
}

}  // namespace

json RunManifest::to_json() const {
    json stage_rows = json::array();
    for (const auto& [stage, outputs] : stages) {
        json outs = json::array();
        for (const auto& o : outputs) outs.push_back({{"path", o.path}, {"sha256", o.sha256}});
        stage_rows.push_back({{"stage", pipeline::to_string(stage)}, {"outputs", std::move(outs)}});
    }
    return {{"tool_version", tool_version},
            {"video_id", video_id},
            {"rng_seed", rng_seed},
            {"no_persona", no_persona},
            {"comment_count", comment_count},
            {"config", config},
            {"inputs", inputs},
            {"stages", std::move(stage_rows)},
            {"gateway_calls", gateway_calls},
            {"failed_stage", failed_stage ? json(pipeline::to_string(*failed_stage)) : json()},
            {"error", error ? json(*error) : json()}};
}

SummaryRecord load_summary(const VideoWorkspace& ws) {
    const auto doc = read_json(ws.summary());
    return decode_artifact("summary.json", [&] {
        SummaryRecord r;
        r.summary.summary_text = doc.at("summary_text").get<std::string>();
        r.summary.keywords = doc.at("keywords").get<std::vector<std::string>>();
        r.summary.source_video = doc.at("source_video").get<std::string>();
        r.model_name = doc.at("model_name").get<std::string>();
        r.created_at = doc.at("created_at").get<std::string>();
        return r;
    });
}

std::optional<std::string> persona_file_hash(const AppConfig& config) {
    if (!config.paths.persona_file) return std::nullopt;
    return util::sha256_hex(util::read_text(*config.paths.persona_file));
}

Pipeline::Pipeline(AppConfig config, gateway::Gateways gateways)
    : config_(std::move(config)),
      gateways_(std::move(gateways)),
      clock_(util::make_clock(config_.use_logical_clock())) {
    config_.validate();
    if (!gateways_.transcriber || !gateways_.captioner || !gateways_.chat || !gateways_.embedder) {
        throw Error(ErrorKind::config, "pipeline needs all four gateways");
    }
}

VideoWorkspace Pipeline::workspace(const std::string& video_id) const {
    if (video_id.empty() || video_id.find_first_of("/\\") != std::string::npos || video_id == "." ||
        video_id == "..") {
        throw Error(ErrorKind::input, "invalid video id: " + video_id);
    }
    return {config_.paths.work_dir / video_id};
}

void Pipeline::store_asset(const video::VideoAsset& asset) const {
    asset.validate();
    const auto ws = workspace(asset.video_id);
    json doc = {{"video_id", asset.video_id},
                {"file", fs::absolute(asset.file_path).string()},
                {"title", asset.title},
                {"description", asset.description},
                {"author", asset.author},
                {"duration", asset.duration},
                {"thumbnail_mime", asset.thumbnail_mime},
                {"thumbnail_file", asset.thumbnail.empty() ? json() : json("thumbnail.img")}};
    if (!asset.thumbnail.empty()) util::write_atomic(ws.root / "thumbnail.img", asset.thumbnail);
    write_json(ws.asset(), doc);
}

video::VideoAsset Pipeline::load_stored_asset(const std::string& video_id) const {
    const auto ws = workspace(video_id);
    if (!fs::exists(ws.asset())) {
        throw Error(ErrorKind::not_found, "no stored video " + video_id);
    }
    const auto doc = read_json(ws.asset());
    return decode_artifact("asset.json", [&] {
        video::VideoAsset a;
        a.video_id = doc.at("video_id").get<std::string>();
        a.file_path = doc.at("file").get<std::string>();
        a.title = doc.at("title").get<std::string>();
        a.description = doc.at("description").get<std::string>();
        a.author = doc.at("author").get<std::string>();
        a.duration = doc.at("duration").get<double>();
        a.thumbnail_mime = doc.at("thumbnail_mime").get<std::string>();
        if (!doc.at("thumbnail_file").is_null()) {
            a.thumbnail = util::read_bytes(ws.root / doc.at("thumbnail_file").get<std::string>());
        }
        return a;
    });
}

std::vector<gateway::TranscriptSegment> Pipeline::transcribe(const video::VideoAsset& asset) {
    const auto ws = workspace(asset.video_id);
    if (fs::exists(ws.transcript())) {
        const auto doc = read_json(ws.transcript());
        return decode_artifact("transcript.json", [&] {
            std::vector<gateway::TranscriptSegment> out;
            for (const auto& s : doc.at("segments")) out.push_back(segment_from_json(s));
            return out;
        });
    }
    auto segments = gateways_.transcriber->transcribe(video::audio_input_for(asset));
    write_json(ws.transcript(), {{"model_name", gateways_.transcriber->model_name()},
                                 {"segments", to_json_array(segments)}});
    return segments;
}

std::vector<video::FrameCaption> Pipeline::caption(const video::VideoAsset& asset,
                                                   std::span<const gateway::TranscriptSegment> transcript,
                                                   const std::function<void(double)>& progress) {
    const auto ws = workspace(asset.video_id);
    if (fs::exists(ws.captions())) {
        const auto doc = read_json(ws.captions());
        return decode_artifact("captions.json", [&] {
            std::vector<video::FrameCaption> out;
            for (const auto& c : doc.at("captions")) out.push_back(caption_from_json(c));
            return out;
        });
    }
    video::CaptionOptions options;
    options.sample_rate = config_.pipeline.sample_rate;
    options.window_seconds = config_.pipeline.window_seconds;
    options.parallelism = config_.pipeline.caption_parallelism;
    options.max_duration_seconds = config_.pipeline.max_duration_seconds;
    options.artifacts_dir = ws.root;
    if (progress) {
        options.on_progress = [&](std::size_t done, std::size_t total) {
            progress(total == 0 ? 1.0 : static_cast<double>(done) / static_cast<double>(total));
        };
    }
    auto captions = video::caption_video(asset, transcript, *gateways_.captioner, options);
    write_json(ws.captions(), {{"model_name", gateways_.captioner->model_name()},
                               {"sample_rate", options.sample_rate},
                               {"window_seconds", options.window_seconds},
                               {"captions", to_json_array(captions)}});
    return captions;
}

SummaryRecord Pipeline::summarize(const video::VideoAsset& asset,
                                  std::span<const gateway::TranscriptSegment> transcript,
                                  std::span<const video::FrameCaption> captions) {
    const auto ws = workspace(asset.video_id);
    if (fs::exists(ws.summary())) return load_summary(ws);
    const auto prompt = summary::build_summary_prompt(captions, transcript, asset,
                                                      gateways_.chat->config().context_budget,
                                                      config_.pipeline.summary_temperature);
    SummaryRecord record;
    record.summary = summary::summarize(prompt, *gateways_.chat, asset.video_id);
    record.model_name = gateways_.chat->model_name();
    record.created_at = clock_->now_iso8601();
    write_json(ws.summary(), {{"summary_text", record.summary.summary_text},
                              {"keywords", record.summary.keywords},
                              {"model_name", record.model_name},
                              {"created_at", record.created_at},
                              {"source_video", record.summary.source_video}});
    return record;
}

std::string Pipeline::thumbnail_description(const video::VideoAsset& asset) {
    const auto ws = workspace(asset.video_id);
    if (fs::exists(ws.thumbnail())) {
        const auto doc = read_json(ws.thumbnail());
        return decode_artifact("thumbnail.json", [&] { return doc.at("description").get<std::string>(); });
    }
    auto description = video::describe_thumbnail(asset, *gateways_.captioner);
    write_json(ws.thumbnail(), {{"description", description}});
    return description;
}

const std::vector<persona::Persona>& Pipeline::personas() {
    std::lock_guard lock(lazy_mutex_);
    if (!personas_) {
        if (!config_.paths.persona_file) {
            throw Error(ErrorKind::config,
                        "no persona file configured (set paths.persona_file or run without personas)");
        }
        personas_ = persona::load_personas(*config_.paths.persona_file);
        for (std::size_t i = 0; i < personas_->size(); ++i) {
            persona_lookup_[(*personas_)[i].persona_id] = i;
        }
    }
    return *personas_;
}

const persona::Persona& Pipeline::persona_by_id(const std::string& persona_id) {
    personas();
    std::lock_guard lock(lazy_mutex_);
    const auto it = persona_lookup_.find(persona_id);
    if (it == persona_lookup_.end()) {
        throw Error(ErrorKind::integrity, "persona " + persona_id + " is not in the persona file");
    }
    return (*personas_)[it->second];
}

const persona::PersonaIndex& Pipeline::persona_index() {
    const auto& all = personas();
    std::lock_guard lock(lazy_mutex_);
    if (index_) return *index_;
    const auto path = config_.persona_index_path();
    if (fs::exists(path)) {
        auto loaded = persona::PersonaIndex::load(path, gateways_.embedder->model_name());
        std::set<std::string> indexed;
        for (const auto& e : loaded.entries()) indexed.insert(e.persona_id);
        const bool matches = indexed.size() == all.size() &&
                             std::all_of(all.begin(), all.end(), [&](const persona::Persona& p) {
                                 return indexed.contains(p.persona_id);
                             });
        if (!matches) {
            throw Error(ErrorKind::stale_index,
                        fmt::format("persona index {} does not match the persona file; rebuild it",
                                    path.string()));
        }
        index_ = std::move(loaded);
    } else {
        spdlog::info("building persona index for {} personas", all.size());
        index_ = persona::build_index(all, *gateways_.embedder);
        index_->save(path);
    }
    return *index_;
}

RankingRecord Pipeline::rank(const std::string& video_id, const summary::VideoSummary& summary) {
    const auto ws = workspace(video_id);
    if (fs::exists(ws.ranking())) {
        const auto doc = read_json(ws.ranking());
        return decode_artifact("ranking.json", [&] {
            RankingRecord r;
            r.model_name = doc.at("model_name").get<std::string>();
            r.query = doc.at("query").get<std::string>();
            for (const auto& e : doc.at("entries")) r.entries.push_back(ranked_from_json(e));
            return r;
        });
    }
    const auto& index = persona_index();
    RankingRecord record;
    record.model_name = index.model_name();
    record.query = persona::keyword_query(summary.keywords);
    record.entries = persona::rank_personas(index, summary.keywords, *gateways_.embedder,
                                            {config_.pipeline.top_k, config_.pipeline.min_score});
    write_json(ws.ranking(), {{"model_name", record.model_name},
                              {"query", record.query},
                              {"k", config_.pipeline.top_k},
                              {"min_score", config_.pipeline.min_score},
                              {"entries", to_json_array(record.entries)}});
    return record;
}

comments::CommentEngine& Pipeline::engine() {
    std::lock_guard lock(lazy_mutex_);
    if (!engine_) {
        comments::EngineSettings settings;
        if (config_.pipeline.fewshot_file) {
            settings.prompts.fewshot = comments::load_fewshot(*config_.pipeline.fewshot_file);
        }
        settings.prompts.temperature = config_.pipeline.comment_temperature;
        settings.prompts.context_budget = gateways_.chat->config().context_budget;
        settings.identities = comments::make_identity_pool(
            config_.pipeline.names_file ? comments::load_names(*config_.pipeline.names_file)
                                        : comments::builtin_names(),
            config_.seed);
        settings.clock = clock_;
        settings.parallelism = config_.pipeline.generation_parallelism;
        engine_ = std::make_unique<comments::CommentEngine>(*gateways_.chat, std::move(settings));
    }
    return *engine_;
}

bool Pipeline::has_summary(const std::string& video_id) const {
    return fs::exists(workspace(video_id).summary());
}

comments::VideoContext Pipeline::context(const std::string& video_id) const {
    const auto ws = workspace(video_id);
    if (!fs::exists(ws.summary()) || !fs::exists(ws.thumbnail())) {
        throw Error(ErrorKind::conflict,
                    fmt::format("video {} has not been summarized yet; wait for its job to finish", video_id));
    }
    const auto asset = load_stored_asset(video_id);
    const auto thumb = read_json(ws.thumbnail());
    return comments::make_context(
        asset, load_summary(ws).summary,
        decode_artifact("thumbnail.json", [&] { return thumb.at("description").get<std::string>(); }));
}

std::vector<comments::Comment> Pipeline::generate(const std::string& video_id, std::size_t batch_index,
                                                  std::size_t count, bool no_persona,
                                                  const std::function<void(double)>& progress) {
    const auto ws = workspace(video_id);
    const auto path = ws.batch(batch_index);
    if (fs::exists(path)) {
        const auto doc = read_json(path);
        return decode_artifact(path.filename().string(), [&] {
            std::vector<comments::Comment> out;
            for (const auto& c : doc.at("comments")) out.push_back(comment_from_json(c));
            return out;
        });
    }
    if (batch_index > ws.batch_count()) {
        throw Error(ErrorKind::internal, fmt::format("batch {} would leave a gap", batch_index));
    }
    const auto context = this->context(video_id);
    std::vector<persona::Persona> ranked;
    if (!no_persona) {
        if (!fs::exists(ws.ranking())) {
            throw Error(ErrorKind::conflict, "personas have not been ranked for video " + video_id);
        }
        for (const auto& r : rank(video_id, context.summary).entries) {
            ranked.push_back(persona_by_id(r.persona_id));
        }
    }
    comments::CommentEngine::BatchRequest request;
    request.plan = comments::plan_batch(count);
    request.personas = ranked;
    request.no_persona = no_persona;
    request.seed = config_.seed;
    request.batch_index = batch_index;
    if (progress) {
        request.on_progress = [&](std::size_t done, std::size_t total) {
            progress(static_cast<double>(done) / static_cast<double>(total));
        };
    }
    auto batch = engine().generate_batch(context, request);
    write_json(path, {{"batch_index", batch_index},
                      {"no_persona", no_persona},
                      {"plan",
                       {{"total", request.plan.total},
                        {"primary_count", request.plan.primary_count},
                        {"thread_count", request.plan.thread_count}}},
                      {"comments", to_json_array(batch)}});
    return batch;
}

std::vector<comments::Comment> Pipeline::load_comments(const std::string& video_id) const {
    const auto ws = workspace(video_id);
    std::vector<comments::Comment> all;
    for (std::size_t i = 0, n = ws.batch_count(); i < n; ++i) {
        const auto doc = read_json(ws.batch(i));
        decode_artifact(ws.batch(i).filename().string(), [&] {
            for (const auto& c : doc.at("comments")) all.push_back(comment_from_json(c));
            return 0;
        });
    }
    return all;
}

RunManifest Pipeline::run(const video::VideoAsset& asset, const RunOptions& options) {
    asset.validate();
    const std::size_t count = options.count.value_or(config_.pipeline.batch_size);
    if (count == 0) {
        throw Error(ErrorKind::validation, "comment count must be at least 1");
    }
    RunManifest manifest;
    manifest.tool_version = tool_version();
    manifest.video_id = asset.video_id;
    manifest.rng_seed = config_.seed;
    manifest.no_persona = options.no_persona;
    manifest.comment_count = count;
    manifest.config = config_snapshot(config_);
    manifest.inputs["video"] = util::sha256_hex(util::read_bytes(asset.file_path));
    if (!asset.thumbnail.empty()) manifest.inputs["thumbnail"] = util::sha256_hex(asset.thumbnail);
    if (!options.no_persona) {
        if (!config_.paths.persona_file) {
            throw Error(ErrorKind::config,
                        "no persona file configured (set paths.persona_file or use --no-persona)");
        }
        manifest.inputs["personas"] = *persona_file_hash(config_);
    }

    const auto ws = workspace(asset.video_id);
    store_asset(asset);
    const auto before = call_counts(gateways_);
    auto report = [&](Stage s, double f) {
        if (options.on_progress) options.on_progress(s, std::clamp(f, 0.0, 1.0));
    };
    auto finish_stage = [&](Stage s, std::vector<fs::path> outputs) {
        std::vector<StageOutput> described;
        for (const auto& p : outputs) described.push_back(describe_output(ws, p));
        manifest.stages.emplace_back(s, std::move(described));
        report(s, 1.0);
        if (options.after_stage) options.after_stage(s);
    };
    auto record_calls = [&] {
        for (const auto& [name, n] : call_counts(gateways_)) manifest.gateway_calls[name] = n - before.at(name);
    };

    Stage current = Stage::transcribing;
    try {
        report(current, 0.0);
        const auto transcript = transcribe(asset);
        finish_stage(current, {ws.transcript()});

        current = Stage::captioning;
        report(current, 0.0);
        const auto captions = caption(asset, transcript, [&](double f) { report(Stage::captioning, f); });
        finish_stage(current, {ws.captions()});

        current = Stage::summarizing;
        report(current, 0.0);
        const auto summary = summarize(asset, transcript, captions);
        thumbnail_description(asset);
        finish_stage(current, {ws.summary(), ws.thumbnail()});

        current = Stage::ranking_personas;
        report(current, 0.0);
        if (options.no_persona) {
            finish_stage(current, {});
        } else {
            rank(asset.video_id, summary.summary);
            finish_stage(current, {ws.ranking()});
        }

        current = Stage::generating_comments;
        report(current, 0.0);
        generate(asset.video_id, 0, count, options.no_persona,
                 [&](double f) { report(Stage::generating_comments, f); });
        finish_stage(current, {ws.batch(0)});
    } catch (const Error& e) {
        manifest.failed_stage = current;
        manifest.error = e.what();
        record_calls();
        write_json(ws.manifest(), manifest.to_json());
        throw;
    }
    record_calls();
    write_json(ws.manifest(), manifest.to_json());
    return manifest;
}

}  // namespace commentsim::pipeline
