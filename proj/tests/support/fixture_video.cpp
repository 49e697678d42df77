#include "fixture_video.hpp"

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unistd.h>

namespace commentsim::testing {

void write_fixture_video(const std::filesystem::path& path, double seconds, double fps, int width, int height) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    cv::VideoWriter writer(path.string(), cv::CAP_FFMPEG, cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), fps,
                           cv::Size(width, height));
    if (!writer.isOpened()) throw std::runtime_error("cannot open video writer for " + path.string());
    const int frames = static_cast<int>(std::llround(seconds * fps));
    for (int i = 0; i < frames; ++i) {
        const int second = static_cast<int>(i / fps);
        cv::Mat frame(height, width, CV_8UC3, cv::Scalar((second * 37) % 256, (second * 91) % 256, 128));
        const int x = (i * 7) % std::max(1, width - 16);
        const int y = (i * 5) % std::max(1, height - 16);
        cv::rectangle(frame, cv::Rect(x, y, 16, 16), cv::Scalar(255, 255, 255), cv::FILLED);
        writer.write(frame);
    }
}

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("commentsim-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
             std::to_string(rd()));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

}  // namespace commentsim::testing
