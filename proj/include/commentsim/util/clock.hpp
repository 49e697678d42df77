#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

namespace commentsim::util {

/// Source of ISO-8601 UTC timestamps. Mock runs use LogicalClock so that
/// every persisted artifact is reproducible.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual std::string now_iso8601() = 0;
};

class SystemClock final : public Clock {
  public:
    std::string now_iso8601() override;
};

/// Starts at 2000-01-01T00:00:00Z and advances one second per reading.
class LogicalClock final : public Clock {
  public:
    std::string now_iso8601() override;

  private:
    std::atomic<std::int64_t> ticks_{0};
};

std::string format_iso8601(std::int64_t unix_seconds);

std::shared_ptr<Clock> make_clock(bool deterministic);

}  // namespace commentsim::util
