#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace merc {

/// Stream purposes are kept separate so that, e.g., toggling message dropout
/// never shifts the initialization draws of an otherwise identical run.
enum class RngPurpose : uint64_t {
    init = 0x9b1a615e01d2f4c3ULL,
    dropmessage = 0x5851f42d4c957f2dULL,
    datagen = 0x14057b7ef767814fULL,
    shuffle = 0x2545f4914f6cdd1dULL,
};

inline uint64_t splitmix64_fin(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Counter-based stream: the n-th draw is a pure function of
/// (purpose, seed, n), so streams are replayable and mutually independent.
class RngStream {
  public:
    RngStream(RngPurpose purpose, uint64_t seed)
        : key_(splitmix64_fin(seed ^ static_cast<uint64_t>(purpose))) {}

    uint64_t seed_key() const { return key_; }
    uint64_t counter() const { return counter_; }

    uint64_t next_u64() {
        uint64_t z = splitmix64_fin(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
        ++counter_;
        return z;
    }

    /// Uniform in [0, 1), 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    uint64_t uniform_int(uint64_t n) {
        const uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= lim);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller. Always consumes exactly two uniforms
    /// so the counter advance per call is fixed.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Derive a sub-seed, e.g. one independent stream per parameter name.
    static uint64_t derive(uint64_t seed, std::string_view tag) {
        return splitmix64_fin(seed ^ fnv1a(tag));
    }
    static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0) {
        return splitmix64_fin(splitmix64_fin(seed ^ (a * 0xd1342543de82ef95ULL)) ^ (b * 0xaf251af3b0f025b5ULL));
    }

  private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace merc
