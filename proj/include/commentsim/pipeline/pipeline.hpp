#pragma once

#include "commentsim/comments/comments.hpp"
#include "commentsim/persona/persona.hpp"
#include "commentsim/pipeline/config.hpp"
#include "commentsim/summary/summary.hpp"
#include "commentsim/video/video.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace commentsim::pipeline {

enum class Stage { transcribing, captioning, summarizing, ranking_personas, generating_comments };

inline constexpr std::array<Stage, 5> kStages = {Stage::transcribing, Stage::captioning, Stage::summarizing,
                                                 Stage::ranking_personas, Stage::generating_comments};

std::string_view to_string(Stage stage) noexcept;
Stage stage_from_string(std::string_view text);

/// Artifact layout of one video's working directory.
struct VideoWorkspace {
    std::filesystem::path root;

    std::filesystem::path asset() const { return root / "asset.json"; }
    std::filesystem::path transcript() const { return root / "transcript.json"; }
    std::filesystem::path captions() const { return root / "captions.json"; }
    std::filesystem::path summary() const { return root / "summary.json"; }
    std::filesystem::path thumbnail() const { return root / "thumbnail.json"; }
    std::filesystem::path ranking() const { return root / "ranking.json"; }
    std::filesystem::path comments_dir() const { return root / "comments"; }
    std::filesystem::path batch(std::size_t index) const;
    std::filesystem::path manifest() const { return root / "manifest.json"; }

    /// Number of comment batches already on disk (batches are numbered from 0
    /// without gaps).
    std::size_t batch_count() const;
};

struct SummaryRecord {
    summary::VideoSummary summary;
    std::string model_name;
    std::string created_at;
};

struct RankingRecord {
    std::string model_name;
    std::string query;
    std::vector<persona::RankedPersona> entries;
};

struct StageOutput {
    std::string path;  // relative to the workspace root
    std::string sha256;
};

struct RunManifest {
    std::string tool_version;
    std::string video_id;
    std::uint64_t rng_seed = 0;
    bool no_persona = false;
    std::size_t comment_count = 0;
    nlohmann::json config;
    std::map<std::string, std::string> inputs;  // name -> sha256 (null-free)
    std::vector<std::pair<Stage, std::vector<StageOutput>>> stages;
    std::map<std::string, std::uint64_t> gateway_calls;
    std::optional<Stage> failed_stage;
    std::optional<std::string> error;

    nlohmann::json to_json() const;
};

struct RunOptions {
    bool no_persona = false;
    /// Comments in the first batch; defaults to pipeline.batch_size.
    std::optional<std::size_t> count;
    /// Fraction of the current stage finished, in [0, 1].
    std::function<void(Stage, double)> on_progress;
    /// Called once each stage's artifacts are on disk.
    std::function<void(Stage)> after_stage;
};

/// The staged video-to-comments run shared by the CLI and the service. Each
/// stage writes its artifact atomically into the video's workspace, and a
/// stage whose artifact already exists is loaded instead of recomputed.
class Pipeline {
  public:
    Pipeline(AppConfig config, gateway::Gateways gateways);

    const AppConfig& config() const noexcept { return config_; }
    gateway::Gateways& gateways() noexcept { return gateways_; }
    const std::shared_ptr<util::Clock>& clock() const noexcept { return clock_; }

    VideoWorkspace workspace(const std::string& video_id) const;

    /// Records the asset metadata (and copies the thumbnail) into the workspace.
    void store_asset(const video::VideoAsset& asset) const;
    /// Rebuilds the asset from the workspace record.
    video::VideoAsset load_stored_asset(const std::string& video_id) const;

    std::vector<gateway::TranscriptSegment> transcribe(const video::VideoAsset& asset);
    std::vector<video::FrameCaption> caption(const video::VideoAsset& asset,
                                             std::span<const gateway::TranscriptSegment> transcript,
                                             const std::function<void(double)>& progress = {});
    SummaryRecord summarize(const video::VideoAsset& asset,
                            std::span<const gateway::TranscriptSegment> transcript,
                            std::span<const video::FrameCaption> captions);
    std::string thumbnail_description(const video::VideoAsset& asset);
    RankingRecord rank(const std::string& video_id, const summary::VideoSummary& summary);

    /// Generates (or loads) batch `batch_index`. Thread comments never
    /// straddle batches.
    std::vector<comments::Comment> generate(const std::string& video_id, std::size_t batch_index,
                                            std::size_t count, bool no_persona,
                                            const std::function<void(double)>& progress = {});

    /// All stages in order, then the manifest. On failure the manifest
    /// records the failed stage and the error is rethrown.
    RunManifest run(const video::VideoAsset& asset, const RunOptions& options = {});

    /// Prompt context for an already summarized video. Error(conflict) when
    /// the summary does not exist yet.
    comments::VideoContext context(const std::string& video_id) const;

    bool has_summary(const std::string& video_id) const;

    /// Every comment in the workspace batches, in batch order.
    std::vector<comments::Comment> load_comments(const std::string& video_id) const;

    comments::CommentEngine& engine();

    const std::vector<persona::Persona>& personas();
    const persona::PersonaIndex& persona_index();
    const persona::Persona& persona_by_id(const std::string& persona_id);

  private:
    AppConfig config_;
    gateway::Gateways gateways_;
    std::shared_ptr<util::Clock> clock_;

    std::mutex lazy_mutex_;
    std::optional<std::vector<persona::Persona>> personas_;
    std::map<std::string, std::size_t> persona_lookup_;
    std::optional<persona::PersonaIndex> index_;
    std::unique_ptr<comments::CommentEngine> engine_;
};

/// Reads the stored summary artifact.
SummaryRecord load_summary(const VideoWorkspace& workspace);

/// Persona file hash, or nullopt when none is configured.
std::optional<std::string> persona_file_hash(const AppConfig& config);

std::string tool_version();

}  // namespace commentsim::pipeline
