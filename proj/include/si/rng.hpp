#pragma once

// Counter-based random streams.
//
// A Stream is a (key, counter) pair. Draw i of a stream is
// splitmix64_finalize(key + i * golden_gamma), i.e. SplitMix64 evaluated at an
// explicit counter, so any draw is a pure function of (key, i). Keys are
// derived from a master seed plus a textual label and optional indices, which
// lets every logical object (factor matrix, replicate noise, permutation) own
// an independent stream that does not shift when other streams are added.
//
// Normals use the Box-Muller transform on two consecutive uniforms; both
// outputs of a pair are consumed in order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include <Eigen/Core>

namespace si::rng {

inline constexpr std::string_view kGeneratorName = "splitmix64-counter/box-muller";

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Key for the stream named `label` under `seed`, further split by `a` and `b`
/// (e.g. replicate index, intervention id).
constexpr std::uint64_t derive_key(std::uint64_t seed, std::string_view label,
                                   std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
    std::uint64_t k = mix64(seed + kGoldenGamma);
    k = mix64(k ^ fnv1a(label));
    k = mix64(k + (a + 1) * kGoldenGamma);
    k = mix64(k ^ ((b + 1) * 0xD1B54A32D192ED03ULL));
    return k;
}

class Stream {
public:
    constexpr explicit Stream(std::uint64_t key) noexcept : key_(key) {}
    Stream(std::uint64_t seed, std::string_view label, std::uint64_t a = 0, std::uint64_t b = 0) noexcept
        : key_(derive_key(seed, label, a, b)) {}

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

    constexpr std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGoldenGamma); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
            if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] keeps the log finite.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

template <class Matrix>
void fill_normal(Matrix& m, Stream& s, double sd = 1.0) {
    // Column-major fill order is part of the reproducibility contract.
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = sd * s.normal();
}

template <class Matrix>
void fill_uniform(Matrix& m, Stream& s, double lo, double hi) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = s.uniform(lo, hi);
}

}  // namespace si::rng
