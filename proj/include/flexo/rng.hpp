#pragma once

// Deterministic random streams. Every consumer receives an explicit Rng so
// that scenario seeds fully determine all outputs; named sub-streams are
// derived by mixing a stream tag into the seed, which keeps e.g. the weight
// draws stable when only the sampling seed changes.

#include <cstdint>
#include <random>
#include <span>

namespace flexo {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    // Standard normal via the polar method; platform-stable given mt19937_64.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    void fill_normal(std::span<double> out, double mean, double sd) {
        for (double& v : out) v = normal(mean, sd);
    }

    std::uint64_t next_u64() { return gen_(); }

    Rng fork(std::uint64_t tag) { return Rng(mix_seed(gen_(), tag)); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace flexo
