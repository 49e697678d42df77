#include "commentsim/util/rng.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/hash.hpp"

#include <unordered_map>

namespace commentsim::util {

DeterministicRng DeterministicRng::from_key(std::string_view key) {
    return DeterministicRng(hash64(key));
}

double DeterministicRng::next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t DeterministicRng::uniform_index(std::uint64_t bound) {
    if (bound == 0) {
        throw Error(ErrorKind::internal, "uniform_index: bound must be positive");
    }
    // Reject the top sliver so every residue is equally likely.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = engine_();
        if (x >= threshold) {
            return x % bound;
        }
    }
}

std::vector<std::size_t> DeterministicRng::sample_without_replacement(std::size_t population,
                                                                      std::size_t count) {
    if (count > population) {
        throw Error(ErrorKind::internal, "sample_without_replacement: count exceeds population");
    }
    // Fisher-Yates over a virtual identity array; only swapped slots are stored,
    // so huge populations (all pairs of a large corpus) stay cheap.
    std::unordered_map<std::size_t, std::size_t> swapped;
    auto at = [&](std::size_t k) {
        const auto it = swapped.find(k);
        return it == swapped.end() ? k : it->second;
    };
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(population - i));
        const auto vi = at(i);
        const auto vj = at(j);
        out.push_back(vj);
        swapped[j] = vi;
    }
    return out;
}

}  // namespace commentsim::util
