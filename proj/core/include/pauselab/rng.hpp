#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace pauselab {

/// FNV-1a over bytes. Used for split hashing, vocab digests and seed derivation.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Deterministic sub-seed for a named purpose ("shuffle", "inject", ...).
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index = 0) {
    return splitmix64(seed ^ fnv1a64(tag) ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

/// mt19937_64 with hand-rolled output transforms. The engine is specified by
/// the standard bit-for-bit; the std distributions are not, so we avoid them.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) {
        // Unbiased rejection sampling on the top bits.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = eng_();
        while (x >= limit) {
            x = eng_();
        }
        return x % n;
    }

    /// Standard normal via Box-Muller (no cached spare, so the draw count per
    /// sample is fixed — two uniforms each).
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

} // namespace pauselab
