#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sense {

// SplitMix64 step, used to derive stream seeds from (seed, id...) tuples.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG with hand-rolled distributions. std::uniform_real_distribution
// and friends are implementation-defined, so all draws here go through fixed
// bit manipulations on top of mt19937_64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Derive an independent stream from (seed, ids...). Same tuple, same stream.
    template <typename... Ids>
    static Rng stream(std::uint64_t seed, Ids... ids) {
        std::uint64_t h = splitmix64(seed);
        ((h = splitmix64(h ^ static_cast<std::uint64_t>(ids))), ...);
        Rng r(0);
        r.engine_.seed(h);
        return r;
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call, deterministic draw order.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // Index draw from unnormalized nonnegative weights.
    int weighted_index(const double* w, int n) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += w[i];
        double x = uniform() * total;
        for (int i = 0; i < n; ++i) {
            x -= w[i];
            if (x < 0.0) return i;
        }
        return n - 1;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace sense
