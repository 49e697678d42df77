#include "commentsim/service/service.hpp"

#include "commentsim/error.hpp"
#include "commentsim/pipeline/serialize.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/util/hash.hpp"
#include "commentsim/util/text.hpp"
#include "commentsim/util/clock.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <chrono>

#include <fmt/format.h>

namespace commentsim::service {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::Stage;

double weighted_progress(const pipeline::ProgressWeights& w, Stage stage, double fraction) {
    const std::array<double, 5> weights = {w.transcribing, w.captioning, w.summarizing, w.ranking_personas,
                                           w.generating_comments};
    double done = 0.0;
    for (std::size_t i = 0; i < pipeline::kStages.size(); ++i) {
        if (pipeline::kStages[i] == stage) {
            return std::clamp(done + weights[i] * std::clamp(fraction, 0.0, 1.0), 0.0, 1.0);
        }
        done += weights[i];
    }
    return std::clamp(done, 0.0, 1.0);
}

namespace {

const std::set<std::string>& accepted_extensions() {
    static const std::set<std::string> exts = {".mp4", ".m4v", ".mov", ".webm", ".mkv", ".avi"};
    return exts;
}

}  // namespace

Service::Service(pipeline::AppConfig config, gateway::Gateways gateways, ServiceHooks hooks)
    : config_(config),
      store_(config.paths.database),
      pipeline_(std::move(config), std::move(gateways)),
      hooks_(std::move(hooks)),
      job_clock_(util::make_clock(config_.use_logical_clock())) {}

Service::~Service() { stop(); }

void Service::start() {
    {
        std::lock_guard lock(queue_mutex_);
        if (!workers_.empty()) return;
        stopping_ = false;
    }
    for (const auto& job : store_.unfinished_jobs()) {
        spdlog::info("resuming job {} for video {} at stage {}", job.job_id, job.video_id, to_string(job.stage));
        enqueue(job.job_id, job.video_id);
    }
    std::lock_guard lock(queue_mutex_);
    for (std::size_t i = 0; i < config_.service.workers; ++i) {
        workers_.emplace_back([this] { worker_loop(); });
    }
}

void Service::stop() {
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& w : workers_) {
        if (w.joinable()) w.join();
    }
    workers_.clear();
}

void Service::enqueue(const std::string& job_id, const std::string& video_id) {
    {
        std::lock_guard lock(queue_mutex_);
        if (!queued_jobs_.insert(job_id).second) return;
        pending_.emplace_back(job_id, video_id);
    }
    queue_cv_.notify_all();
}

void Service::worker_loop() {
    for (;;) {
        std::pair<std::string, std::string> next;
        {
            std::unique_lock lock(queue_mutex_);
            std::deque<std::pair<std::string, std::string>>::iterator it;
            queue_cv_.wait(lock, [&] {
                if (stopping_) return true;
                it = std::find_if(pending_.begin(), pending_.end(),
                                  [&](const auto& p) { return !busy_videos_.contains(p.second); });
                return it != pending_.end();
            });
            if (stopping_) return;
            next = *it;
            pending_.erase(it);
            busy_videos_.insert(next.second);
        }
        if (auto job = store_.get_job(next.first)) {
            run_job(*job);
        }
        {
            std::lock_guard lock(queue_mutex_);
            busy_videos_.erase(next.second);
            queued_jobs_.erase(next.first);
        }
        queue_cv_.notify_all();
        finished_cv_.notify_all();
    }
}

void Service::persist_batch(const std::string& video_id, std::span<const comments::Comment> batch) {
    std::vector<persona::Persona> referenced;
    std::set<std::string> seen;
    for (const auto& c : batch) {
        if (c.persona_id && seen.insert(*c.persona_id).second) {
            referenced.push_back(pipeline_.persona_by_id(*c.persona_id));
        }
    }
    store_.insert_comments(batch, referenced);
    spdlog::info("stored {} comments for video {}", batch.size(), video_id);
}

void Service::run_job(const JobRecord& job) {
    auto& clock = job_clock_;
    const auto video = store_.get_video(job.video_id);
    try {
        if (!video) throw Error(ErrorKind::integrity, "job references a missing video");
        const auto& weights = config_.service.progress;
        if (job.kind == JobKind::full) {
            pipeline::RunOptions options;
            options.no_persona = video->no_persona;
            options.count = job.count;
            options.on_progress = [&](Stage s, double f) {
                store_.advance_job(job.job_id, job_stage_of(s), weighted_progress(weights, s, f),
                                   clock->now_iso8601());
            };
            options.after_stage = [&](Stage s) {
                if (hooks_.after_stage) hooks_.after_stage(job.job_id, s);
            };
            const auto asset = pipeline_.load_stored_asset(job.video_id);
            pipeline_.run(asset, options);
            persist_batch(job.video_id, pipeline_.generate(job.video_id, 0, job.count, video->no_persona));
        } else {
            std::size_t index = 0;
            if (job.batch_index) {
                index = *job.batch_index;
            } else {
                index = pipeline_.workspace(job.video_id).batch_count();
                store_.set_job_batch(job.job_id, index);
            }
            store_.advance_job(job.job_id, JobStage::generating_comments, 0.0, clock->now_iso8601());
            const auto batch = pipeline_.generate(job.video_id, index, job.count, video->no_persona, [&](double f) {
                store_.advance_job(job.job_id, JobStage::generating_comments, f, clock->now_iso8601());
            });
            if (hooks_.after_stage) hooks_.after_stage(job.job_id, Stage::generating_comments);
            persist_batch(job.video_id, batch);
        }
        store_.advance_job(job.job_id, JobStage::done, 1.0, clock->now_iso8601());
    } catch (const std::exception& e) {
        const auto current = store_.get_job(job.job_id);
        const std::string stage = current ? std::string(to_string(current->stage)) : "unknown";
        spdlog::error("job {} failed during {}: {}", job.job_id, stage, e.what());
        store_.fail_job(job.job_id, stage, e.what(), clock->now_iso8601());
    }
}

JobRecord Service::wait_for_job(const std::string& job_id, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        auto job = get_job(job_id);
        if (job.stage == JobStage::done || job.stage == JobStage::failed) return job;
        if (std::chrono::steady_clock::now() >= deadline) return job;
        std::unique_lock lock(queue_mutex_);
        finished_cv_.wait_for(lock, std::chrono::milliseconds(50));
    }
}

std::mutex& Service::video_mutex(const std::string& video_id) {
    std::lock_guard lock(video_locks_mutex_);
    auto& slot = video_locks_[video_id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

CreatedVideo Service::create_video(const UploadRequest& upload) {
    if (util::is_blank(upload.title)) {
        throw Error(ErrorKind::validation, "title is required");
    }
    if (upload.file_bytes.empty()) {
        throw Error(ErrorKind::validation, "uploaded video file is empty");
    }
    if (upload.count && *upload.count == 0) {
        throw Error(ErrorKind::validation, "count must be at least 1");
    }
    const auto ext = util::to_lower_ascii(fs::path(upload.filename).extension().string());
    if (!accepted_extensions().contains(ext)) {
        throw Error(ErrorKind::media, fmt::format("unsupported video container '{}'", ext.empty() ? upload.filename : ext));
    }
    if (!upload.no_persona && !config_.paths.persona_file) {
        throw Error(ErrorKind::config, "the service has no persona file configured");
    }

    std::lock_guard lock(create_mutex_);
    const auto seq = store_.video_count();
    const std::string video_id =
        "v_" + util::content_hash(fmt::format("{}:{}", util::sha256_hex(upload.file_bytes), seq));
    const auto upload_dir = config_.paths.work_dir / "uploads" / video_id;
    const auto file_path = upload_dir / ("source" + ext);
    util::write_atomic(file_path, upload.file_bytes);
    video::VideoAsset asset;
    try {
        asset = video::load_asset(file_path, upload.title, upload.description, upload.author,
                                  std::vector<std::uint8_t>(upload.thumbnail_bytes.begin(),
                                                            upload.thumbnail_bytes.end()),
                                  video_id);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(upload_dir, ec);
        throw;
    }
    pipeline_.store_asset(asset);

    const auto now = job_clock_->now_iso8601();
    VideoRecord video;
    video.video_id = video_id;
    video.title = asset.title;
    video.description = asset.description;
    video.author = asset.author;
    video.file_path = fs::absolute(file_path).string();
    video.duration = asset.duration;
    video.owner = upload.owner;
    video.upload_time = now;
    video.no_persona = upload.no_persona;

    JobRecord job;
    job.job_id = "j_" + util::content_hash(fmt::format("{}:{}", video_id, store_.job_count()));
    job.video_id = video_id;
    job.kind = JobKind::full;
    job.count = upload.count.value_or(config_.pipeline.batch_size);
    job.created_at = now;
    job.stage_times = {{"queued", now}};

    store_.insert_video(video);
    store_.insert_job(job);
    store_.set_latest_job(video_id, job.job_id);
    video.latest_job_id = job.job_id;
    enqueue(job.job_id, video_id);
    return {video, job};
}

std::vector<VideoRecord> Service::list_videos() const { return store_.list_videos(); }

VideoRecord Service::get_video(const std::string& video_id) const {
    auto v = store_.get_video(video_id);
    if (!v) throw Error(ErrorKind::not_found, "no video " + video_id);
    return *v;
}

JobRecord Service::get_job(const std::string& job_id) const {
    auto j = store_.get_job(job_id);
    if (!j) throw Error(ErrorKind::not_found, "no job " + job_id);
    return *j;
}

std::vector<CommentNode> Service::list_comments(const std::string& video_id) const {
    get_video(video_id);
    const auto all = store_.comments_for_video(video_id);
    std::map<std::string, std::vector<std::size_t>> children;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < all.size(); ++i) index[all[i].comment_id] = i;
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& c = all[i];
        if (!c.parent_id) {
            roots.push_back(i);
        } else if (!index.contains(*c.parent_id)) {
            throw Error(ErrorKind::integrity,
                        fmt::format("comment {} has a parent outside video {}", c.comment_id, video_id));
        } else {
            children[*c.parent_id].push_back(i);
        }
    }
    std::map<std::string, std::optional<std::string>> persona_text;
    std::size_t visited = 0;
    std::function<CommentNode(std::size_t, std::size_t)> build = [&](std::size_t i, std::size_t depth) {
        if (depth > all.size()) throw Error(ErrorKind::integrity, "comment tree contains a cycle");
        ++visited;
        CommentNode node;
        node.comment = all[i];
        if (node.comment.persona_id) {
            auto [it, inserted] = persona_text.try_emplace(*node.comment.persona_id);
            if (inserted) {
                const auto p = store_.get_persona(*node.comment.persona_id);
                if (p) it->second = p->text;
            }
            node.persona_text = it->second;
        }
        if (const auto kids = children.find(all[i].comment_id); kids != children.end()) {
            for (auto k : kids->second) node.children.push_back(build(k, depth + 1));
        }
        return node;
    };
    std::vector<CommentNode> forest;
    for (auto r : roots) forest.push_back(build(r, 0));
    if (visited != all.size()) {
        throw Error(ErrorKind::integrity, "comment tree contains a cycle");
    }
    return forest;
}

pipeline::SummaryRecord Service::get_summary(const std::string& video_id) const {
    get_video(video_id);
    const auto ws = pipeline_.workspace(video_id);
    if (!fs::exists(ws.summary())) {
        throw Error(ErrorKind::conflict, "video " + video_id + " has not been summarized yet");
    }
    return pipeline::load_summary(ws);
}

ReplyResult Service::post_reply(const std::string& comment_id, const std::string& body) {
    const auto target = store_.get_comment(comment_id);
    if (!target) throw Error(ErrorKind::not_found, "no comment " + comment_id);
    if (util::is_blank(body)) throw Error(ErrorKind::validation, "reply body must not be empty");
    if (!target->generated()) {
        throw Error(ErrorKind::validation, "replies must target a simulated comment");
    }
    const auto context = pipeline_.context(target->video_id);
    std::lock_guard lock(video_mutex(target->video_id));
    const auto ordinal = store_.comment_count(target->video_id);
    auto& engine = pipeline_.engine();
    const auto creator =
        engine.make_creator_reply(*target, body, comments::make_comment_id(target->video_id, "x", ordinal));
    std::optional<persona::Persona> persona;
    if (target->persona_id) persona = store_.get_persona(*target->persona_id);
    const auto reply = engine.generate_reply(context, *target, creator, persona ? &*persona : nullptr,
                                             comments::make_comment_id(target->video_id, "x", ordinal + 1));
    const std::vector<comments::Comment> nodes = {creator, reply};
    store_.insert_comments(nodes, {});
    return {creator, reply};
}

comments::Comment Service::post_custom_persona(const std::string& video_id, const std::string& persona_text) {
    get_video(video_id);
    persona::make_persona(persona_text, persona::PersonaSource::user_defined);
    const auto context = pipeline_.context(video_id);
    std::lock_guard lock(video_mutex(video_id));
    const auto ordinal = store_.comment_count(video_id);
    auto result = pipeline_.engine().generate_custom(context, persona_text,
                                                     comments::make_comment_id(video_id, "x", ordinal));
    const std::vector<comments::Comment> nodes = {result.comment};
    const std::vector<persona::Persona> personas = {result.persona};
    store_.insert_comments(nodes, personas);
    return result.comment;
}

JobRecord Service::request_more_comments(const std::string& video_id, std::size_t count) {
    const auto video = get_video(video_id);
    if (count == 0) throw Error(ErrorKind::validation, "count must be at least 1");
    const auto ws = pipeline_.workspace(video_id);
    if (!fs::exists(ws.summary()) || (!video.no_persona && !fs::exists(ws.ranking()))) {
        throw Error(ErrorKind::conflict,
                    "video " + video_id + " is still being processed; wait for its job to finish");
    }
    std::lock_guard lock(create_mutex_);
    JobRecord job;
    job.job_id = "j_" + util::content_hash(fmt::format("{}:{}", video_id, store_.job_count()));
    job.video_id = video_id;
    job.kind = JobKind::generate;
    job.count = count;
    job.created_at = job_clock_->now_iso8601();
    job.stage_times = {{"queued", job.created_at}};
    store_.insert_job(job);
    store_.set_latest_job(video_id, job.job_id);
    enqueue(job.job_id, video_id);
    return job;
}

json to_json(const VideoRecord& v) {
    return {{"video_id", v.video_id},
            {"title", v.title},
            {"description", v.description},
            {"author", v.author},
            {"duration", v.duration},
            {"owner", v.owner},
            {"upload_time", v.upload_time},
            {"no_persona", v.no_persona},
            {"latest_job_id", v.latest_job_id ? json(*v.latest_job_id) : json()}};
}

json to_json(const JobRecord& j) {
    return {{"job_id", j.job_id},
            {"video_id", j.video_id},
            {"kind", to_string(j.kind)},
            {"count", j.count},
            {"batch_index", j.batch_index ? json(*j.batch_index) : json()},
            {"stage", to_string(j.stage)},
            {"progress", j.progress},
            {"error", j.error ? json(*j.error) : json()},
            {"failed_stage", j.failed_stage ? json(*j.failed_stage) : json()},
            {"created_at", j.created_at},
            {"stage_times", j.stage_times}};
}

json to_json(const CommentNode& node) {
    json j = pipeline::to_json(node.comment);
    j["persona_text"] = node.persona_text ? json(*node.persona_text) : json();
    json kids = json::array();
    for (const auto& c : node.children) kids.push_back(to_json(c));
    j["children"] = std::move(kids);
    return j;
}

int http_status_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::validation:
        case ErrorKind::budget:
            return 422;
        case ErrorKind::input:
            return 400;
        case ErrorKind::media:
            return 415;
        case ErrorKind::not_found:
            return 404;
        case ErrorKind::conflict:
        case ErrorKind::stale_index:
            return 409;
        case ErrorKind::transport:
        case ErrorKind::parse:
        case ErrorKind::generation:
        case ErrorKind::scoring:
            return 502;
        default:
            return 500;
    }
}

}  // namespace commentsim::service
