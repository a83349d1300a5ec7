#pragma once

#include <cstdint>
#include <random>

namespace texadiff {

// Seeded random source shared by every stochastic stage. Draws are
// reproducible for a given seed on a given standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform() * static_cast<double>(hi - lo + 1));
    }
    double normal() { return normal_(engine_); }
    std::uint64_t next() { return engine_(); }

    // Independent child stream, e.g. one per scene.
    Rng fork(std::uint64_t salt) { return Rng(derive_seed(engine_(), salt)); }

    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
        // splitmix64 finaliser
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace texadiff
