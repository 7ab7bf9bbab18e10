#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace semifl {

// Engine output is fully specified by the standard; the distributions below
// are hand-rolled because the <random> distributions are not.
using rng_stream = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent seed from a tuple of integers, e.g.
/// (master_seed, round, client). Order of the parts matters.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

inline rng_stream make_stream(std::initializer_list<std::uint64_t> parts) {
    return rng_stream{derive_seed(parts)};
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(rng_stream& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(rng_stream& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

/// Uniform integer in [0, bound) by rejection; bound > 0.
inline std::uint64_t uniform_index(rng_stream& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % bound;
}

/// Standard normal via Box-Muller (one draw per call, second discarded).
inline double standard_normal(rng_stream& rng) {
    double u1;
    do {
        u1 = uniform_unit(rng);
    } while (u1 <= 0.0);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename T>
void shuffle(std::span<T> items, rng_stream& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, rng_stream& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(idx), rng);
    return idx;
}

} // namespace semifl
