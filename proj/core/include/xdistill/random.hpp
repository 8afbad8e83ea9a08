#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "xdistill/common.hpp"

namespace xd {

// Stable across library versions: raw mt19937 draws only, no std distributions.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    // uniform in [0, 1)
    real uniform() { return static_cast<real>((gen_() >> 8) * (1.0 / 16777216.0)); }

    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller
    real normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = (gen_() >> 8) * (1.0 / 16777216.0);
        double u2 = (gen_() >> 8) * (1.0 / 16777216.0);
        if (u1 < 1e-12) u1 = 1e-12;
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = static_cast<real>(r * std::sin(th));
        have_spare_ = true;
        return static_cast<real>(r * std::cos(th));
    }

    // uniform integer in [0, n)
    uint32_t below(uint32_t n) { return n ? gen_() % n : 0; }

    std::mt19937& engine() { return gen_; }

private:
    std::mt19937 gen_;
    real spare_ = 0;
    bool have_spare_ = false;
};

// splitmix64, used to derive independent per-sample seeds
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace xd
