#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace fracevol {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seed of path `index` in an ensemble with `master_seed`.
///
/// Counter-based: depends only on (master_seed, index), so ensembles are identical
/// regardless of which worker generates which path.
constexpr std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master_seed) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

/// Standard normal stream: std::mt19937_64 feeding the Box-Muller transform.
///
/// Each pair of 53-bit uniforms (u1, u2) yields sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2),
/// consumed cosine first. mt19937_64 is fully specified by the standard, so draws are
/// bit-reproducible across standard libraries (unlike std::normal_distribution).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1], u2 in [0,1)
        const double u1 = 1.0 - uniform53();
        const double u2 = uniform53();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    void fill(std::span<double> out) {
        for (double& z : out) z = (*this)();
    }

private:
    double uniform53() { return double(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace fracevol
