#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace mtsim {

// All sampling goes through this wrapper. The engine (mt19937_64) has a
// standard-pinned output sequence, and the distributions below are written
// out explicitly, so identical seeds give identical streams on every
// platform. Nothing in the project reads std::random_device or the clock.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the sine partner is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n), rejection sampled (no modulo bias).
    uint64_t uniform_below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            uint64_t x = next_u64();
            if (x >= threshold) return x % n;
        }
    }

    // Exact categorical draw by CDF walk; probs should sum to ~1.
    int categorical(std::span<const double> probs) {
        double u = uniform01();
        double acc = 0.0;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

private:
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Deterministic substream derivation: fold tags into the base seed.
// Used to give every phase of a run its own independent stream.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags) {
    uint64_t h = splitmix64(base);
    for (uint64_t t : tags) h = splitmix64(h ^ splitmix64(t));
    return h;
}

}  // namespace mtsim
