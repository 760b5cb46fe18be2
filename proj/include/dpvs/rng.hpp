#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace dpvs {

// Seed derivation and sampling helpers. std::mt19937_64 is the only engine
// used anywhere; the distribution transforms below are pinned here because
// the standard library's distributions are implementation-defined and would
// break byte-stable reruns.

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hashName(std::string_view name) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives the seed of a named substream. Streams are identified by a label
/// plus up to two integer coordinates (client id, round, coalition mask, ...)
/// so unrelated parts of a run never share randomness.
constexpr std::uint64_t deriveSeed(std::uint64_t master, std::string_view stream,
                                   std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
    std::uint64_t h = mix64(master ^ hashName(stream));
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    return h;
}

inline std::mt19937_64 makeEngine(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Uniform double in [0, 1), 53-bit resolution.
inline double nextUnit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection sampling, unbiased.
inline std::uint64_t nextBelow(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("nextBelow: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

/// Standard normal via Box-Muller. Stateless: two draws per call.
inline double nextNormal(std::mt19937_64& rng) {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double u1 = 1.0 - nextUnit(rng);  // (0,1], keeps log finite
    const double u2 = nextUnit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

template <typename T>
void shuffleInPlace(std::mt19937_64& rng, std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(nextBelow(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

/// First k entries of a seeded partial Fisher-Yates over `items` (copied).
template <typename T>
std::vector<T> sampleWithoutReplacement(std::mt19937_64& rng, std::vector<T> items,
                                        std::size_t k) {
    if (k > items.size()) throw std::invalid_argument("sampleWithoutReplacement: k exceeds population");
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(nextBelow(rng, items.size() - i));
        std::swap(items[i], items[j]);
    }
    items.resize(k);
    return items;
}

}  // namespace dpvs
