#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pipevo {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent seeds and stable hashes.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
    return mix64(seed ^ mix64(value));
}

/// Seed for a named purpose ("init", "reproduce", ...) derived from a master seed, so that
/// each consumer owns its own stream and reordering one consumer never shifts another.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) noexcept {
    return hash_combine(master, fnv1a(purpose));
}

inline Rng make_stream(std::uint64_t master, std::string_view purpose) {
    return Rng(derive_seed(master, purpose));
}

/// Uniform double in [0, 1). Avoids std::generate_canonical's implementation latitude.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

std::string serialize_rng(const Rng& rng);
void restore_rng(Rng& rng, const std::string& state);

}  // namespace pipevo
