#pragma once

#include "commentsim/error.hpp"
#include "commentsim/pipeline/pipeline.hpp"
#include "commentsim/service/store.hpp"

#include <json.hpp>

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace commentsim::service {

struct UploadRequest {
    std::string filename;
    std::string file_bytes;
    std::string title;
    std::string description;
    std::string author;
    std::string thumbnail_bytes;
    std::string owner;
    bool no_persona = false;
    std::optional<std::size_t> count;
};

struct CreatedVideo {
    VideoRecord video;
    JobRecord job;
};

/// Nested comment node as served to clients.
struct CommentNode {
    comments::Comment comment;
    std::optional<std::string> persona_text;
    std::vector<CommentNode> children;
};

struct ReplyResult {
    comments::Comment user_node;
    comments::Comment reply;
};

struct ServiceHooks {
    /// Runs on the worker thread once a stage's artifacts are persisted.
    std::function<void(const std::string& job_id, pipeline::Stage stage)> after_stage;
};

/// Stage-weighted job progress: completed stages count fully, the current
/// stage by its completed fraction.
double weighted_progress(const pipeline::ProgressWeights& weights, pipeline::Stage stage, double fraction);

/// The application behind the HTTP API: uploads, background jobs with
/// per-video mutual exclusion, comment trees and interactive generation.
class Service {
  public:
    Service(pipeline::AppConfig config, gateway::Gateways gateways, ServiceHooks hooks = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Starts the workers and re-enqueues every unfinished job from the store.
    void start();
    /// Stops accepting work and joins the workers after their current job.
    void stop();

    /// Blocks until the job is done or failed (or the timeout passes).
    JobRecord wait_for_job(const std::string& job_id, std::chrono::milliseconds timeout);

    CreatedVideo create_video(const UploadRequest& upload);
    std::vector<VideoRecord> list_videos() const;
    VideoRecord get_video(const std::string& video_id) const;
    JobRecord get_job(const std::string& job_id) const;
    std::vector<CommentNode> list_comments(const std::string& video_id) const;
    pipeline::SummaryRecord get_summary(const std::string& video_id) const;
    ReplyResult post_reply(const std::string& comment_id, const std::string& body);
    comments::Comment post_custom_persona(const std::string& video_id, const std::string& persona_text);
    JobRecord request_more_comments(const std::string& video_id, std::size_t count);

    pipeline::Pipeline& pipeline() noexcept { return pipeline_; }
    Store& store() noexcept { return store_; }

  private:
    void enqueue(const std::string& job_id, const std::string& video_id);
    void worker_loop();
    void run_job(const JobRecord& job);
    void persist_batch(const std::string& video_id, std::span<const comments::Comment> batch);
    std::mutex& video_mutex(const std::string& video_id);

    pipeline::AppConfig config_;
    Store store_;
    pipeline::Pipeline pipeline_;
    ServiceHooks hooks_;
    std::shared_ptr<util::Clock> job_clock_;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<std::pair<std::string, std::string>> pending_;  // (job_id, video_id)
    std::set<std::string> busy_videos_;
    std::set<std::string> queued_jobs_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;

    std::condition_variable finished_cv_;

    std::mutex video_locks_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> video_locks_;
    std::mutex create_mutex_;
};

nlohmann::json to_json(const VideoRecord& video);
nlohmann::json to_json(const JobRecord& job);
nlohmann::json to_json(const CommentNode& node);

/// HTTP front end. Routes are documented in docs/api.md.
class HttpServer {
  public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Binds host:port (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called.
    void listen();
    void stop();

  private:
    void install_routes();

    Service& service_;
    std::unique_ptr<httplib::Server> server_;
    std::string api_token_;
};

/// HTTP status for an error kind (422 validation, 404, 409, 415, 502, 500 ...).
int http_status_for(ErrorKind kind) noexcept;

}  // namespace commentsim::service
