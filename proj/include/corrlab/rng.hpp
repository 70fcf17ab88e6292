#pragma once

#include <cmath>
#include <cstdint>

#include "corrlab/grid.hpp"

namespace corrlab {

// Counter-based generator: the value at counter c is a pure function of
// (key, c), so independent streams can be derived for parallel realizations
// and a stream can be replayed from any point.  Mixing is the splitmix64
// finalizer applied to key + c * golden ratio.
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix(seed ^ 0x9e3779b97f4a7c15ull) ^ mix(stream + 0x6a09e667f3bcc909ull)),
          ctr_(0),
          have_cached_(false),
          cached_(0.0) {}

    std::uint64_t next_u64() { return mix(key_ + (++ctr_) * 0x9e3779b97f4a7c15ull); }

    // Uniform in (0,1), never exactly 0 or 1.
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Standard normal via Box-Muller, second member of each pair cached.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = kTwoPi * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Complex normal with E|z|^2 = 1 (re and im each variance 1/2).
    cplx gaussian_complex() {
        const double s = 1.0 / std::sqrt(2.0);
        const double re = gaussian();
        const double im = gaussian();
        return {s * re, s * im};
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t ctr_;
    bool have_cached_;
    double cached_;
};

}  // namespace corrlab
