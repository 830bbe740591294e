#pragma once

#include <cmath>
#include <cstdint>

namespace rrw {

// splitmix64-based generator. Kept self-contained so that seeded runs are
// reproducible independent of standard-library distribution internals.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    uint32_t below(uint32_t n) { return static_cast<uint32_t>(next_u64() % n); }

    bool coin() { return (next_u64() & 1u) != 0; }

    // Box-Muller, one value per call (the pair's second half is cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Derives an independent stream, e.g. one per layer or per epoch.
    Rng fork(uint64_t salt) {
        uint64_t s = next_u64();
        return Rng(s ^ (salt * 0x9e3779b97f4a7c15ULL));
    }

  private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rrw
