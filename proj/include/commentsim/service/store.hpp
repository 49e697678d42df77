#pragma once

#include "commentsim/comments/comments.hpp"
#include "commentsim/persona/persona.hpp"
#include "commentsim/pipeline/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

struct sqlite3;

namespace commentsim::service {

/// Job lifecycle: queued, then the pipeline stages in order, then done.
/// failed can follow any state.
enum class JobStage {
    queued,
    transcribing,
    captioning,
    summarizing,
    ranking_personas,
    generating_comments,
    done,
    failed
};

std::string_view to_string(JobStage stage) noexcept;
JobStage job_stage_from_string(std::string_view text);
JobStage job_stage_of(pipeline::Stage stage) noexcept;
/// Position in the lifecycle order; failed has no rank.
int stage_rank(JobStage stage) noexcept;

enum class JobKind { full, generate };

std::string_view to_string(JobKind kind) noexcept;
JobKind job_kind_from_string(std::string_view text);

struct VideoRecord {
    std::string video_id;
    std::string title;
    std::string description;
    std::string author;
    std::string file_path;
    double duration = 0.0;
    std::string owner;
    std::string upload_time;
    bool no_persona = false;
    std::optional<std::string> latest_job_id;
};

struct JobRecord {
    std::string job_id;
    std::string video_id;
    JobKind kind = JobKind::full;
    std::size_t count = 0;
    std::optional<std::size_t> batch_index;
    JobStage stage = JobStage::queued;
    double progress = 0.0;
    std::optional<std::string> error;
    std::optional<std::string> failed_stage;
    std::string created_at;
    /// stage name -> time the job entered it
    nlohmann::json stage_times = nlohmann::json::object();
};

/// Embedded relational store for videos, jobs, personas and comments.
/// Referential integrity is enforced by the schema (foreign keys) and by
/// checks at write time; every multi-row write is one transaction.
class Store {
  public:
    explicit Store(const std::filesystem::path& path);
    ~Store();

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    void insert_video(const VideoRecord& video);
    std::optional<VideoRecord> get_video(const std::string& video_id) const;
    std::vector<VideoRecord> list_videos() const;
    std::size_t video_count() const;
    void set_latest_job(const std::string& video_id, const std::string& job_id);

    void insert_job(const JobRecord& job);
    std::optional<JobRecord> get_job(const std::string& job_id) const;
    std::size_t job_count() const;
    /// Jobs that are neither done nor failed, oldest first.
    std::vector<JobRecord> unfinished_jobs() const;
    /// Moves a job forward. Progress never decreases and the stage never moves
    /// backwards (except to failed); done forces progress to 1.
    JobRecord advance_job(const std::string& job_id, JobStage stage, double progress, const std::string& now);
    JobRecord fail_job(const std::string& job_id, const std::string& failed_stage, const std::string& error,
                       const std::string& now);
    void set_job_batch(const std::string& job_id, std::size_t batch_index);
    /// True when some job for the video is neither done nor failed.
    bool has_active_job(const std::string& video_id) const;

    void upsert_persona(const persona::Persona& persona);
    std::optional<persona::Persona> get_persona(const std::string& persona_id) const;

    /// Inserts comments (and the personas they reference) atomically.
    /// Comments already present are skipped, so replays are harmless.
    void insert_comments(std::span<const comments::Comment> comments,
                         std::span<const persona::Persona> personas);
    std::optional<comments::Comment> get_comment(const std::string& comment_id) const;
    /// In insertion order.
    std::vector<comments::Comment> comments_for_video(const std::string& video_id) const;
    std::size_t comment_count(const std::string& video_id) const;

  private:
    void exec(const char* sql) const;

    sqlite3* db_ = nullptr;
    mutable std::recursive_mutex mutex_;
};

}  // namespace commentsim::service
