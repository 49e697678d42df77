#pragma once

#include "commentsim/gateway/gateway.hpp"

#include <opencv2/core.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace commentsim::video {

/// An uploaded video plus the metadata its creator supplied.
struct VideoAsset {
    std::string video_id;
    std::filesystem::path file_path;
    std::string title;
    std::string description;
    std::string author;
    std::vector<std::uint8_t> thumbnail;  // encoded image, may be empty
    std::string thumbnail_mime = "image/png";
    double duration = 0.0;

    void validate() const;
};

struct VideoInfo {
    double fps = 0.0;
    std::int64_t frame_count = 0;
    double duration = 0.0;
    int width = 0;
    int height = 0;
};

/// Decodes the whole stream once. Duration is frame_count / fps, which is
/// more reliable than container metadata.
VideoInfo probe_video(const std::filesystem::path& path);

/// Probes the file and fills duration. video_id defaults to "v_<hash of file bytes>".
VideoAsset load_asset(const std::filesystem::path& path, std::string title,
                      std::string description, std::string author,
                      std::vector<std::uint8_t> thumbnail = {}, std::string video_id = {});

/// The media file as a transcription input (backends demux containers themselves).
gateway::AudioInput audio_input_for(const VideoAsset& asset);

struct SampledFrame {
    std::size_t index = 0;
    double timestamp = 0.0;  // index / sample_rate
    cv::Mat image;
};

inline constexpr double kDefaultSampleRate = 1.0;
inline constexpr double kDefaultMaxDurationSeconds = 25.0 * 60.0;

/// floor(duration * sample_rate) frames at t = index / sample_rate. Each
/// sample takes the decoded frame whose display interval contains t.
std::vector<SampledFrame> extract_frames(const VideoAsset& asset, double sample_rate,
                                         double max_duration_seconds = kDefaultMaxDurationSeconds);

inline constexpr std::size_t kFramesPerPanel = 4;

/// Time span and dialogue for one panel.
struct PanelWindow {
    std::size_t panel_index = 0;
    std::size_t first_frame = 0;
    std::size_t last_frame = 0;  // last real (unpadded) frame: the "current" frame
    double start = 0.0;
    double end = 0.0;
    std::string dialogue;
};

/// Segments overlapping [start, end] (open overlap: touching endpoints do not
/// count), joined by single spaces in transcript order.
std::string dialogue_in_window(std::span<const gateway::TranscriptSegment> transcript,
                               double start, double end);

/// One window per stride-4 panel. The window ends where the panel's current
/// frame ends (its timestamp + 1/sample_rate) and reaches back `window_seconds`.
std::vector<PanelWindow> align_dialogue(std::span<const SampledFrame> frames,
                                        std::span<const gateway::TranscriptSegment> transcript,
                                        double window_seconds, double sample_rate);

struct FramePanel {
    std::size_t panel_index = 0;
    std::array<SampledFrame, kFramesPerPanel> frames;
    cv::Mat composite;
    std::string dialogue;
    double start = 0.0;
    double end = 0.0;
    /// Timestamp of the current (last real) frame.
    double timestamp = 0.0;
};

/// 2x2 grid in reading order: top-left earliest, bottom-right current.
cv::Mat compose_grid(const std::array<cv::Mat, kFramesPerPanel>& frames);

/// Panels over non-overlapping stride-4 windows. A short final window is
/// padded by repeating its last frame.
std::vector<FramePanel> assemble_panels(std::span<const SampledFrame> frames,
                                        std::span<const PanelWindow> windows);

gateway::EncodedImage encode_png(const cv::Mat& image);

struct FrameCaption {
    double timestamp = 0.0;
    std::string text;

    friend bool operator==(const FrameCaption&, const FrameCaption&) = default;
};

/// Frame-caption instruction sent with every panel.
extern const std::string_view kFrameCaptionInstruction;
/// Instruction for the one-off thumbnail description.
extern const std::string_view kThumbnailInstruction;

struct CaptionOptions {
    double sample_rate = kDefaultSampleRate;
    double window_seconds = 4.0;
    std::size_t parallelism = 4;
    double max_duration_seconds = kDefaultMaxDurationSeconds;
    /// When set, panels/ and captions/ live here and finished panel captions
    /// are reused instead of re-requested.
    std::optional<std::filesystem::path> artifacts_dir;
    std::function<void(std::size_t done, std::size_t total)> on_progress;
};

/// Captions every panel, fanning out up to `parallelism` requests. The result
/// is in panel order whatever order the calls finish in.
std::vector<FrameCaption> caption_panels(std::span<const FramePanel> panels,
                                         gateway::Captioner& captioner,
                                         const CaptionOptions& options);

/// extract_frames -> align_dialogue -> assemble_panels -> caption_panels.
std::vector<FrameCaption> caption_video(const VideoAsset& asset,
                                        std::span<const gateway::TranscriptSegment> transcript,
                                        gateway::Captioner& captioner,
                                        const CaptionOptions& options = {});

/// "none" when the asset has no thumbnail.
std::string describe_thumbnail(const VideoAsset& asset, gateway::Captioner& captioner);

}  // namespace commentsim::video
