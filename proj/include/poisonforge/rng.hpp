#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace poisonforge {

// Uniform integer in [0, bound) from raw engine output. std::uniform_int_distribution
// is implementation-defined, so seeded draws would differ across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& engine, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
        draw = engine();
    } while (draw >= limit);
    return draw % bound;
}

// Seeded permutation of `items` (Fisher-Yates).
template <typename T>
std::vector<T> seeded_shuffle(std::span<const T> items, std::uint64_t seed) {
    std::vector<T> out(items.begin(), items.end());
    std::mt19937_64 engine(seed);
    for (std::size_t i = out.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(engine, i));
        std::swap(out[i - 1], out[j]);
    }
    return out;
}

} // namespace poisonforge
