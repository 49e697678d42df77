#include "commentsim/util/clock.hpp"

#include <chrono>
#include <ctime>

#include <fmt/format.h>

namespace commentsim::util {

std::string format_iso8601(std::int64_t unix_seconds) {
    const std::time_t t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                       tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

std::string SystemClock::now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    return format_iso8601(
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

std::string LogicalClock::now_iso8601() {
    constexpr std::int64_t kEpoch2000 = 946684800;
    return format_iso8601(kEpoch2000 + ticks_.fetch_add(1));
}

std::shared_ptr<Clock> make_clock(bool deterministic) {
    if (deterministic) return std::make_shared<LogicalClock>();
    return std::make_shared<SystemClock>();
}

}  // namespace commentsim::util
