#include "commentsim/video/video.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/util/hash.hpp"
#include "commentsim/util/text.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace commentsim::video {
namespace fs = std::filesystem;

const std::string_view kFrameCaptionInstruction =
    "You are an AI visual assistant that can generate audio description for a video clip. You "
    "receive a image of 4 frames, which are sampled during 4 seconds of the video clip. You also "
    "receive the audio caption during the 4 seconds.\n\n"
    "The 4-th frame is the current frame, using the provided frames and audio caption, generate "
    "an audio description of the current frame in a detailed manner. Include details like object "
    "counts, position of the objects, relative position between the objects, the visual "
    "composition, the emotion, what might be going on during the clip, etc. Imagine describing "
    "the video clip to someone who cannot see the clip.";

const std::string_view kThumbnailInstruction =
    "You are an AI visual assistant. You receive the thumbnail image of a video. Describe what a "
    "viewer sees in the thumbnail in two or three sentences: the subjects, any visible text, the "
    "colors and the mood.";

void VideoAsset::validate() const {
    if (util::is_blank(title)) {
        throw Error(ErrorKind::validation, "video title must not be empty");
    }
    if (!(duration > 0.0)) {
        throw Error(ErrorKind::input, "video duration must be positive");
    }
}

VideoInfo probe_video(const fs::path& path) {
    if (!fs::exists(path)) {
        throw Error(ErrorKind::input, "video file not found: " + path.string());
    }
    cv::VideoCapture capture(path.string(), cv::CAP_FFMPEG);
    if (!capture.isOpened()) {
        throw Error(ErrorKind::media,
                    "cannot decode " + path.string() + ": FFmpeg could not open the container");
    }
    VideoInfo info;
    info.fps = capture.get(cv::CAP_PROP_FPS);
    if (!(info.fps > 0.0) || !std::isfinite(info.fps)) {
        throw Error(ErrorKind::media, "cannot decode " + path.string() + ": stream has no frame rate");
    }
    cv::Mat frame;
    while (capture.read(frame)) {
        if (info.frame_count == 0) {
            info.width = frame.cols;
            info.height = frame.rows;
        }
        ++info.frame_count;
    }
    info.duration = static_cast<double>(info.frame_count) / info.fps;
    return info;
}

VideoAsset load_asset(const fs::path& path, std::string title, std::string description,
                      std::string author, std::vector<std::uint8_t> thumbnail, std::string video_id) {
    VideoAsset asset;
    asset.file_path = path;
    asset.title = std::move(title);
    asset.description = std::move(description);
    asset.author = std::move(author);
    asset.thumbnail = std::move(thumbnail);
    if (!asset.thumbnail.empty()) {
        const auto& t = asset.thumbnail;
        const bool jpeg = t.size() > 2 && t[0] == 0xff && t[1] == 0xd8;
        asset.thumbnail_mime = jpeg ? "image/jpeg" : "image/png";
    }
    const auto info = probe_video(path);
    if (info.frame_count == 0) {
        throw Error(ErrorKind::media, "video has zero duration: " + path.string());
    }
    asset.duration = info.duration;
    asset.video_id = video_id.empty() ? "v_" + util::content_hash(util::read_bytes(path))
                                      : std::move(video_id);
    asset.validate();
    return asset;
}

gateway::AudioInput audio_input_for(const VideoAsset& asset) {
    gateway::AudioInput audio;
    audio.bytes = util::read_bytes(asset.file_path);
    audio.duration = asset.duration;
    audio.format = gateway::AudioFormat::container;
    audio.filename = asset.file_path.filename().string();
    const auto ext = util::to_lower_ascii(asset.file_path.extension().string());
    if (ext == ".mp4" || ext == ".m4v" || ext == ".mov") {
        audio.mime_type = "video/mp4";
    } else if (ext == ".webm") {
        audio.mime_type = "video/webm";
    } else if (ext == ".mkv") {
        audio.mime_type = "video/x-matroska";
    }
    return audio;
}

std::vector<SampledFrame> extract_frames(const VideoAsset& asset, double sample_rate,
                                         double max_duration_seconds) {
    if (!(sample_rate > 0.0)) {
        throw Error(ErrorKind::input, "sample_rate must be positive");
    }
    cv::VideoCapture capture(asset.file_path.string(), cv::CAP_FFMPEG);
    if (!capture.isOpened()) {
        throw Error(ErrorKind::media, "cannot decode " + asset.file_path.string() +
                                          ": FFmpeg could not open the container");
    }
    const double fps = capture.get(cv::CAP_PROP_FPS);
    if (!(fps > 0.0) || !std::isfinite(fps)) {
        throw Error(ErrorKind::media,
                    "cannot decode " + asset.file_path.string() + ": stream has no frame rate");
    }

    // Decode sequentially; keep the decoded frame covering each sample time.
    std::vector<SampledFrame> frames;
    cv::Mat decoded;
    std::int64_t decoded_index = 0;
    std::size_t next_sample = 0;
    while (capture.read(decoded)) {
        const double frame_start = static_cast<double>(decoded_index) / fps;
        const double frame_end = static_cast<double>(decoded_index + 1) / fps;
        if (frame_end > max_duration_seconds + 1e-9) {
            throw Error(ErrorKind::input,
                        fmt::format("video is longer than the {} s limit", max_duration_seconds));
        }
        for (;;) {
            const double t = static_cast<double>(next_sample) / sample_rate;
            if (t + 1e-9 < frame_start || t + 1e-9 >= frame_end) break;
            frames.push_back({next_sample, t, decoded.clone()});
            ++next_sample;
        }
        ++decoded_index;
    }
    if (decoded_index == 0) {
        throw Error(ErrorKind::media, "video has zero duration: " + asset.file_path.string());
    }
    const double duration = static_cast<double>(decoded_index) / fps;
    const auto expected = static_cast<std::size_t>(std::floor(duration * sample_rate + 1e-9));
    if (frames.size() > expected) frames.resize(expected);
    return frames;
}

std::string dialogue_in_window(std::span<const gateway::TranscriptSegment> transcript, double start,
                               double end) {
    std::vector<std::string> parts;
    for (const auto& segment : transcript) {
        if (segment.start < end && segment.end > start) {
            parts.push_back(std::string(util::trim(segment.text)));
        }
    }
    return util::join(parts, " ");
}

std::vector<PanelWindow> align_dialogue(std::span<const SampledFrame> frames,
                                        std::span<const gateway::TranscriptSegment> transcript,
                                        double window_seconds, double sample_rate) {
    if (!(sample_rate > 0.0)) {
        throw Error(ErrorKind::input, "sample_rate must be positive");
    }
    std::vector<PanelWindow> windows;
    for (std::size_t first = 0; first < frames.size(); first += kFramesPerPanel) {
        PanelWindow w;
        w.panel_index = windows.size();
        w.first_frame = first;
        w.last_frame = std::min(first + kFramesPerPanel, frames.size()) - 1;
        w.end = frames[w.last_frame].timestamp + 1.0 / sample_rate;
        w.start = std::max(0.0, w.end - window_seconds);
        w.dialogue = dialogue_in_window(transcript, w.start, w.end);
        windows.push_back(std::move(w));
    }
    return windows;
}

cv::Mat compose_grid(const std::array<cv::Mat, kFramesPerPanel>& frames) {
    const cv::Size size = frames[0].size();
    const int type = frames[0].type();
    std::array<cv::Mat, kFramesPerPanel> cells;
    for (std::size_t i = 0; i < kFramesPerPanel; ++i) {
        if (frames[i].empty()) {
            throw Error(ErrorKind::input, "panel frame is empty");
        }
        cv::Mat cell = frames[i];
        if (cell.size() != size) cv::resize(cell, cell, size);
        if (cell.type() != type) cell.convertTo(cell, type);
        cells[i] = cell;
    }
    cv::Mat top;
    cv::Mat bottom;
    cv::Mat grid;
    cv::hconcat(cells[0], cells[1], top);
    cv::hconcat(cells[2], cells[3], bottom);
    cv::vconcat(top, bottom, grid);
    return grid;
}

std::vector<FramePanel> assemble_panels(std::span<const SampledFrame> frames,
                                        std::span<const PanelWindow> windows) {
    if (frames.empty()) {
        throw Error(ErrorKind::input, "cannot assemble panels from zero frames");
    }
    const auto expected = (frames.size() + kFramesPerPanel - 1) / kFramesPerPanel;
    if (windows.size() != expected) {
        throw Error(ErrorKind::internal, fmt::format("expected {} panel windows, got {}", expected,
                                                     windows.size()));
    }
    std::vector<FramePanel> panels;
    panels.reserve(expected);
    for (const auto& w : windows) {
        FramePanel panel;
        panel.panel_index = w.panel_index;
        panel.dialogue = w.dialogue;
        panel.start = w.start;
        panel.end = w.end;
        panel.timestamp = frames[w.last_frame].timestamp;
        std::array<cv::Mat, kFramesPerPanel> images;
        for (std::size_t slot = 0; slot < kFramesPerPanel; ++slot) {
            const auto source = std::min(w.first_frame + slot, w.last_frame);
            panel.frames[slot] = frames[source];
            images[slot] = frames[source].image;
        }
        panel.composite = compose_grid(images);
        panels.push_back(std::move(panel));
    }
    return panels;
}

gateway::EncodedImage encode_png(const cv::Mat& image) {
    gateway::EncodedImage out;
    if (!cv::imencode(".png", image, out.bytes)) {
        throw Error(ErrorKind::internal, "PNG encoding failed");
    }
    out.mime_type = "image/png";
    out.width = image.cols;
    out.height = image.rows;
    return out;
}

namespace {

fs::path caption_cache_path(const fs::path& dir, std::size_t panel_index) {
    return dir / "captions" / fmt::format("panel_{:04}.txt", panel_index);
}

fs::path panel_image_path(const fs::path& dir, std::size_t panel_index) {
    return dir / "panels" / fmt::format("panel_{:04}.png", panel_index);
}

}  // namespace

std::vector<FrameCaption> caption_panels(std::span<const FramePanel> panels,
                                         gateway::Captioner& captioner,
                                         const CaptionOptions& options) {
    if (panels.empty()) {
        throw Error(ErrorKind::pipeline, "captioning needs at least one panel");
    }
    const std::size_t total = panels.size();
    std::vector<std::optional<std::string>> texts(total);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::atomic<bool> failed{false};
    std::mutex mutex;
    std::optional<std::pair<std::size_t, std::string>> first_error;

    auto report = [&](std::size_t finished) {
        if (!options.on_progress) return;
        std::lock_guard lock(mutex);
        options.on_progress(finished, total);
    };

    auto worker = [&] {
        for (;;) {
            if (failed.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= total) return;
            const FramePanel& panel = panels[i];
            try {
                std::string text;
                const bool cached = options.artifacts_dir &&
                                    fs::exists(caption_cache_path(*options.artifacts_dir, i));
                if (cached) {
                    text = util::read_text(caption_cache_path(*options.artifacts_dir, i));
                } else {
                    const auto image = encode_png(panel.composite);
                    if (options.artifacts_dir) {
                        util::write_atomic(panel_image_path(*options.artifacts_dir, i), image.bytes);
                    }
                    text = captioner.caption(image, panel.dialogue, kFrameCaptionInstruction);
                    if (options.artifacts_dir) {
                        util::write_atomic(caption_cache_path(*options.artifacts_dir, i), text);
                    }
                }
                texts[i] = std::move(text);
                report(done.fetch_add(1) + 1);
            } catch (const std::exception& e) {
                std::lock_guard lock(mutex);
                if (!first_error || first_error->first > i) first_error.emplace(i, e.what());
                failed.store(true);
                return;
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(options.parallelism, 1, total);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    if (first_error) {
        throw Error(ErrorKind::pipeline, fmt::format("captioning panel {} failed: {}",
                                                     first_error->first, first_error->second));
    }

    std::vector<FrameCaption> captions;
    captions.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        captions.push_back({panels[i].timestamp, std::move(*texts[i])});
    }
    return captions;
}

std::vector<FrameCaption> caption_video(const VideoAsset& asset,
                                        std::span<const gateway::TranscriptSegment> transcript,
                                        gateway::Captioner& captioner,
                                        const CaptionOptions& options) {
    const auto frames = extract_frames(asset, options.sample_rate, options.max_duration_seconds);
    if (frames.empty()) {
        throw Error(ErrorKind::pipeline, "video yielded no frames to caption");
    }
    const auto windows = align_dialogue(frames, transcript, options.window_seconds, options.sample_rate);
    const auto panels = assemble_panels(frames, windows);
    return caption_panels(panels, captioner, options);
}

std::string describe_thumbnail(const VideoAsset& asset, gateway::Captioner& captioner) {
    if (asset.thumbnail.empty()) return "none";
    gateway::EncodedImage image;
    image.bytes = asset.thumbnail;
    image.mime_type = asset.thumbnail_mime;
    return captioner.caption(image, "", kThumbnailInstruction);
}

}  // namespace commentsim::video
