#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace vvpit {

// splitmix64 step; the generator below and all seed derivation are built on it
// so every stream is fully specified by this file (no reliance on libstdc++
// distribution internals, which are not pinned by the standard).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stable sub-seed from (seed, tag): FNV-1a over the tag, mixed with the base.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = base ^ (h + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2));
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    // Box-Muller; consumes exactly two uniforms per call so stream positions
    // stay independent of call history.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Knuth for small lambda, normal approximation above the exp underflow range.
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda > 500.0) {
            double v = normal(lambda, std::sqrt(lambda));
            return v < 0.0 ? 0 : static_cast<int>(std::lround(v));
        }
        double limit = std::exp(-lambda);
        double prod = uniform();
        int n = 0;
        while (prod > limit) {
            prod *= uniform();
            ++n;
        }
        return n;
    }

private:
    std::uint64_t state_;
};

}  // namespace vvpit
