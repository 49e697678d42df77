#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace commentsim::util {

/// Seeded generator with platform-independent draws.
///
/// std::mt19937_64's output sequence is fixed by the standard, but the std
/// distributions are not, so every draw here is computed from raw engine
/// output. Anything that must be reproducible across machines goes through
/// this class.
class DeterministicRng {
  public:
    explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

    /// Seed from an arbitrary key (hash of the key text).
    static DeterministicRng from_key(std::string_view key);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double next_unit();

    /// Uniform in [-1, 1).
    double next_signed_unit() { return 2.0 * next_unit() - 1.0; }

    /// Unbiased uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_index(std::uint64_t bound);

    /// `count` distinct indices from [0, population), uniformly without
    /// replacement, in draw order (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count);

  private:
    std::mt19937_64 engine_;
};

}  // namespace commentsim::util
