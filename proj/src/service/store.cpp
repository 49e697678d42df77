#include "commentsim/service/store.hpp"

#include "commentsim/error.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <set>

#include <fmt/format.h>

namespace commentsim::service {
using nlohmann::json;

std::string_view to_string(JobStage stage) noexcept {
    switch (stage) {
        case JobStage::queued: return "queued";
        case JobStage::transcribing: return "transcribing";
        case JobStage::captioning: return "captioning";
        case JobStage::summarizing: return "summarizing";
        case JobStage::ranking_personas: return "ranking_personas";
        case JobStage::generating_comments: return "generating_comments";
        case JobStage::done: return "done";
        case JobStage::failed: return "failed";
    }
    return "queued";
}

JobStage job_stage_from_string(std::string_view text) {
    for (auto s : {JobStage::queued, JobStage::transcribing, JobStage::captioning, JobStage::summarizing,
                   JobStage::ranking_personas, JobStage::generating_comments, JobStage::done,
                   JobStage::failed}) {
        if (to_string(s) == text) return s;
    }
    throw Error(ErrorKind::integrity, fmt::format("unknown job stage '{}'", text));
}

JobStage job_stage_of(pipeline::Stage stage) noexcept {
    switch (stage) {
        case pipeline::Stage::transcribing: return JobStage::transcribing;
        case pipeline::Stage::captioning: return JobStage::captioning;
        case pipeline::Stage::summarizing: return JobStage::summarizing;
        case pipeline::Stage::ranking_personas: return JobStage::ranking_personas;
        case pipeline::Stage::generating_comments: return JobStage::generating_comments;
    }
    return JobStage::queued;
}

int stage_rank(JobStage stage) noexcept {
    return stage == JobStage::failed ? -1 : static_cast<int>(stage);
}

std::string_view to_string(JobKind kind) noexcept { return kind == JobKind::full ? "full" : "generate"; }

JobKind job_kind_from_string(std::string_view text) {
    if (text == "full") return JobKind::full;
    if (text == "generate") return JobKind::generate;
    throw Error(ErrorKind::integrity, fmt::format("unknown job kind '{}'", text));
}

namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS videos (
  video_id TEXT PRIMARY KEY,
  title TEXT NOT NULL CHECK (length(title) > 0),
  description TEXT NOT NULL,
  author TEXT NOT NULL,
  file_path TEXT NOT NULL,
  duration REAL NOT NULL,
  owner TEXT NOT NULL,
  upload_time TEXT NOT NULL,
  no_persona INTEGER NOT NULL,
  latest_job_id TEXT
);
CREATE TABLE IF NOT EXISTS jobs (
  job_id TEXT PRIMARY KEY,
  video_id TEXT NOT NULL REFERENCES videos(video_id),
  kind TEXT NOT NULL,
  count INTEGER NOT NULL CHECK (count > 0),
  batch_index INTEGER,
  stage TEXT NOT NULL,
  progress REAL NOT NULL CHECK (progress >= 0 AND progress <= 1),
  error TEXT,
  failed_stage TEXT,
  created_at TEXT NOT NULL,
  stage_times TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS personas (
  persona_id TEXT PRIMARY KEY,
  text TEXT NOT NULL,
  source TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS comments (
  comment_id TEXT PRIMARY KEY,
  video_id TEXT NOT NULL REFERENCES videos(video_id),
  kind TEXT NOT NULL,
  body TEXT NOT NULL CHECK (length(body) > 0),
  author_name TEXT NOT NULL,
  avatar_seed TEXT NOT NULL,
  persona_id TEXT REFERENCES personas(persona_id),
  parent_id TEXT REFERENCES comments(comment_id),
  created_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS comments_by_video ON comments(video_id);
CREATE INDEX IF NOT EXISTS jobs_by_video ON jobs(video_id);
)sql";

/// Prepared statement with positional binding helpers.
class Statement {
  public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
            throw Error(ErrorKind::internal, fmt::format("sqlite prepare failed: {}", sqlite3_errmsg(db)));
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, const std::string& v) {
        sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Statement& bind(int i, const std::optional<std::string>& v) {
        if (v) return bind(i, *v);
        sqlite3_bind_null(stmt_, i);
        return *this;
    }
    Statement& bind(int i, double v) {
        sqlite3_bind_double(stmt_, i, v);
        return *this;
    }
    Statement& bind(int i, std::int64_t v) {
        sqlite3_bind_int64(stmt_, i, v);
        return *this;
    }
    Statement& bind(int i, std::optional<std::size_t> v) {
        if (v) return bind(i, static_cast<std::int64_t>(*v));
        sqlite3_bind_null(stmt_, i);
        return *this;
    }

    /// True while rows remain.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        const std::string msg = sqlite3_errmsg(db_);
        if (rc == SQLITE_CONSTRAINT) {
            throw Error(ErrorKind::integrity, "store constraint violated: " + msg);
        }
        throw Error(ErrorKind::internal, "sqlite step failed: " + msg);
    }
    void run() {
        while (step()) {
        }
    }

    std::string text(int col) const {
        const auto* p = sqlite3_column_text(stmt_, col);
        return p ? std::string(reinterpret_cast<const char*>(p),
                               static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
                 : std::string();
    }
    std::optional<std::string> optional_text(int col) const {
        if (sqlite3_column_type(stmt_, col) == SQLITE_NULL) return std::nullopt;
        return text(col);
    }
    double real(int col) const { return sqlite3_column_double(stmt_, col); }
    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
    bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

  private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

/// BEGIN IMMEDIATE ... COMMIT, rolled back if the scope exits by exception.
class Transaction {
  public:
    explicit Transaction(sqlite3* db) : db_(db) { exec("BEGIN IMMEDIATE"); }
    ~Transaction() {
        if (!committed_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    }
    void commit() {
        exec("COMMIT");
        committed_ = true;
    }

  private:
    void exec(const char* sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown";
            sqlite3_free(err);
            throw Error(ErrorKind::internal, fmt::format("sqlite '{}' failed: {}", sql, msg));
        }
    }
    sqlite3* db_;
    bool committed_ = false;
};

constexpr const char* kVideoColumns =
    "video_id, title, description, author, file_path, duration, owner, upload_time, no_persona, latest_job_id";

VideoRecord read_video(const Statement& s) {
    VideoRecord v;
    v.video_id = s.text(0);
    v.title = s.text(1);
    v.description = s.text(2);
    v.author = s.text(3);
    v.file_path = s.text(4);
    v.duration = s.real(5);
    v.owner = s.text(6);
    v.upload_time = s.text(7);
    v.no_persona = s.integer(8) != 0;
    v.latest_job_id = s.optional_text(9);
    return v;
}

constexpr const char* kJobColumns =
    "job_id, video_id, kind, count, batch_index, stage, progress, error, failed_stage, created_at, stage_times";

JobRecord read_job(const Statement& s) {
    JobRecord j;
    j.job_id = s.text(0);
    j.video_id = s.text(1);
    j.kind = job_kind_from_string(s.text(2));
    j.count = static_cast<std::size_t>(s.integer(3));
    if (!s.is_null(4)) j.batch_index = static_cast<std::size_t>(s.integer(4));
    j.stage = job_stage_from_string(s.text(5));
    j.progress = s.real(6);
    j.error = s.optional_text(7);
    j.failed_stage = s.optional_text(8);
    j.created_at = s.text(9);
    j.stage_times = json::parse(s.text(10));
    return j;
}

constexpr const char* kCommentColumns =
    "comment_id, video_id, kind, body, author_name, avatar_seed, persona_id, parent_id, created_at";

comments::Comment read_comment(const Statement& s) {
    comments::Comment c;
    c.comment_id = s.text(0);
    c.video_id = s.text(1);
    c.kind = comments::comment_kind_from_string(s.text(2));
    c.body = s.text(3);
    c.author_name = s.text(4);
    c.avatar_seed = s.text(5);
    c.persona_id = s.optional_text(6);
    c.parent_id = s.optional_text(7);
    c.created_at = s.text(8);
    return c;
}

}  // namespace

Store::Store(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (sqlite3_open_v2(path.string().c_str(), &db_,
                        SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw Error(ErrorKind::config, fmt::format("cannot open database {}: {}", path.string(), msg));
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA foreign_keys = ON");
    exec("PRAGMA journal_mode = WAL");
    exec("PRAGMA synchronous = NORMAL");
    exec(kSchema);
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) const {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        throw Error(ErrorKind::internal, "sqlite exec failed: " + msg);
    }
}

void Store::insert_video(const VideoRecord& v) {
    std::lock_guard lock(mutex_);
    Statement s(db_,
                "INSERT INTO videos (video_id, title, description, author, file_path, duration, owner, "
                "upload_time, no_persona, latest_job_id) VALUES (?,?,?,?,?,?,?,?,?,?)");
    s.bind(1, v.video_id).bind(2, v.title).bind(3, v.description).bind(4, v.author).bind(5, v.file_path);
    s.bind(6, v.duration).bind(7, v.owner).bind(8, v.upload_time);
    s.bind(9, static_cast<std::int64_t>(v.no_persona)).bind(10, v.latest_job_id);
    s.run();
}

std::optional<VideoRecord> Store::get_video(const std::string& video_id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, fmt::format("SELECT {} FROM videos WHERE video_id = ?", kVideoColumns).c_str());
    s.bind(1, video_id);
    if (!s.step()) return std::nullopt;
    return read_video(s);
}

std::vector<VideoRecord> Store::list_videos() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, fmt::format("SELECT {} FROM videos ORDER BY rowid", kVideoColumns).c_str());
    std::vector<VideoRecord> out;
    while (s.step()) out.push_back(read_video(s));
    return out;
}

std::size_t Store::video_count() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT COUNT(*) FROM videos");
    s.step();
    return static_cast<std::size_t>(s.integer(0));
}

void Store::set_latest_job(const std::string& video_id, const std::string& job_id) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "UPDATE videos SET latest_job_id = ? WHERE video_id = ?");
    s.bind(1, job_id).bind(2, video_id).run();
}

void Store::insert_job(const JobRecord& j) {
    std::lock_guard lock(mutex_);
    Statement s(db_,
                "INSERT INTO jobs (job_id, video_id, kind, count, batch_index, stage, progress, error, "
                "failed_stage, created_at, stage_times) VALUES (?,?,?,?,?,?,?,?,?,?,?)");
    s.bind(1, j.job_id).bind(2, j.video_id).bind(3, std::string(to_string(j.kind)));
    s.bind(4, static_cast<std::int64_t>(j.count)).bind(5, j.batch_index);
    s.bind(6, std::string(to_string(j.stage))).bind(7, j.progress).bind(8, j.error).bind(9, j.failed_stage);
    s.bind(10, j.created_at).bind(11, j.stage_times.dump());
    s.run();
}

std::optional<JobRecord> Store::get_job(const std::string& job_id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, fmt::format("SELECT {} FROM jobs WHERE job_id = ?", kJobColumns).c_str());
    s.bind(1, job_id);
    if (!s.step()) return std::nullopt;
    return read_job(s);
}

std::size_t Store::job_count() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT COUNT(*) FROM jobs");
    s.step();
    return static_cast<std::size_t>(s.integer(0));
}

std::vector<JobRecord> Store::unfinished_jobs() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, fmt::format("SELECT {} FROM jobs WHERE stage NOT IN ('done', 'failed') ORDER BY rowid",
                                 kJobColumns)
                         .c_str());
    std::vector<JobRecord> out;
    while (s.step()) out.push_back(read_job(s));
    return out;
}

JobRecord Store::advance_job(const std::string& job_id, JobStage stage, double progress,
                             const std::string& now) {
    std::lock_guard lock(mutex_);
    Transaction tx(db_);
    auto job = get_job(job_id);
    if (!job) throw Error(ErrorKind::not_found, "no job " + job_id);
    if (job->stage == JobStage::done || job->stage == JobStage::failed) {
        throw Error(ErrorKind::conflict, fmt::format("job {} already finished", job_id));
    }
    if (stage == JobStage::failed) {
        throw Error(ErrorKind::internal, "use fail_job to fail a job");
    }
    if (stage_rank(stage) < stage_rank(job->stage)) stage = job->stage;
    if (stage != job->stage && !job->stage_times.contains(std::string(to_string(stage)))) {
        job->stage_times[std::string(to_string(stage))] = now;
    }
    job->stage = stage;
    job->progress = stage == JobStage::done ? 1.0 : std::max(job->progress, std::clamp(progress, 0.0, 1.0));
    Statement s(db_, "UPDATE jobs SET stage = ?, progress = ?, stage_times = ? WHERE job_id = ?");
    s.bind(1, std::string(to_string(job->stage))).bind(2, job->progress).bind(3, job->stage_times.dump());
    s.bind(4, job_id).run();
    tx.commit();
    return *job;
}

JobRecord Store::fail_job(const std::string& job_id, const std::string& failed_stage, const std::string& error,
                          const std::string& now) {
    std::lock_guard lock(mutex_);
    Transaction tx(db_);
    auto job = get_job(job_id);
    if (!job) throw Error(ErrorKind::not_found, "no job " + job_id);
    job->stage = JobStage::failed;
    job->error = error;
    job->failed_stage = failed_stage;
    job->stage_times["failed"] = now;
    Statement s(db_,
                "UPDATE jobs SET stage = 'failed', error = ?, failed_stage = ?, stage_times = ? WHERE job_id = ?");
    s.bind(1, error).bind(2, failed_stage).bind(3, job->stage_times.dump()).bind(4, job_id).run();
    tx.commit();
    return *job;
}

void Store::set_job_batch(const std::string& job_id, std::size_t batch_index) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "UPDATE jobs SET batch_index = ? WHERE job_id = ?");
    s.bind(1, std::optional<std::size_t>(batch_index)).bind(2, job_id).run();
}

bool Store::has_active_job(const std::string& video_id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT COUNT(*) FROM jobs WHERE video_id = ? AND stage NOT IN ('done', 'failed')");
    s.bind(1, video_id);
    s.step();
    return s.integer(0) > 0;
}

void Store::upsert_persona(const persona::Persona& p) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "INSERT OR IGNORE INTO personas (persona_id, text, source) VALUES (?,?,?)");
    s.bind(1, p.persona_id).bind(2, p.text).bind(3, std::string(persona::to_string(p.source))).run();
}

std::optional<persona::Persona> Store::get_persona(const std::string& persona_id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT persona_id, text, source FROM personas WHERE persona_id = ?");
    s.bind(1, persona_id);
    if (!s.step()) return std::nullopt;
    return persona::Persona{s.text(0), s.text(1), persona::persona_source_from_string(s.text(2))};
}

void Store::insert_comments(std::span<const comments::Comment> batch,
                            std::span<const persona::Persona> personas) {
    std::lock_guard lock(mutex_);
    Transaction tx(db_);
    for (const auto& p : personas) upsert_persona(p);
    std::set<std::string> pending;
    for (const auto& c : batch) pending.insert(c.comment_id);
    for (const auto& c : batch) {
        comments::validate_comment(c);
        if (c.parent_id) {
            auto parent = get_comment(*c.parent_id);
            if (!parent && !pending.contains(*c.parent_id)) {
                throw Error(ErrorKind::integrity,
                            fmt::format("comment {} references missing parent {}", c.comment_id, *c.parent_id));
            }
            if (parent && parent->video_id != c.video_id) {
                throw Error(ErrorKind::integrity,
                            fmt::format("comment {} and its parent belong to different videos", c.comment_id));
            }
        }
        if (c.persona_id && !get_persona(*c.persona_id)) {
            throw Error(ErrorKind::integrity,
                        fmt::format("comment {} references unknown persona {}", c.comment_id, *c.persona_id));
        }
        Statement s(db_, fmt::format("INSERT OR IGNORE INTO comments ({}) VALUES (?,?,?,?,?,?,?,?,?)",
                                     kCommentColumns)
                             .c_str());
        s.bind(1, c.comment_id).bind(2, c.video_id).bind(3, std::string(comments::to_string(c.kind)));
        s.bind(4, c.body).bind(5, c.author_name).bind(6, c.avatar_seed).bind(7, c.persona_id);
        s.bind(8, c.parent_id).bind(9, c.created_at);
        s.run();
    }
    tx.commit();
}

std::optional<comments::Comment> Store::get_comment(const std::string& comment_id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, fmt::format("SELECT {} FROM comments WHERE comment_id = ?", kCommentColumns).c_str());
    s.bind(1, comment_id);
    if (!s.step()) return std::nullopt;
    return read_comment(s);
}

std::vector<comments::Comment> Store::comments_for_video(const std::string& video_id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_,
                fmt::format("SELECT {} FROM comments WHERE video_id = ? ORDER BY rowid", kCommentColumns).c_str());
    s.bind(1, video_id);
    std::vector<comments::Comment> out;
    while (s.step()) out.push_back(read_comment(s));
    return out;
}

std::size_t Store::comment_count(const std::string& video_id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT COUNT(*) FROM comments WHERE video_id = ?");
    s.bind(1, video_id);
    s.step();
    return static_cast<std::size_t>(s.integer(0));
}

}  // namespace commentsim::service
