#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fsrir {

// splitmix64 finalizer; used to derive independent substream seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives a substream seed from a base seed and a list of ids, so that
// (room, context, query) work items get independent deterministic streams.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> ids) {
    uint64_t s = mix64(base);
    for (uint64_t id : ids) {
        s = mix64(s ^ mix64(id + 0x632be59bd9b4e019ULL));
    }
    return s;
}

// Deterministic RNG. mt19937_64 has a standardized sequence, and the
// uniform/normal transforms below are spelled out here rather than taken
// from <random> distributions, whose outputs differ between standard
// library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        // Rejection sampling keeps the draw exactly uniform.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fsrir
