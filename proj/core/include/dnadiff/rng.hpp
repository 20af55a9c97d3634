#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dnadiff {

// Deterministic random stream. Gaussian draws go through an explicit
// Box-Muller transform instead of std::normal_distribution so that a given
// seed yields the same values on every standard library implementation.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(gen_() % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent stream; used to give each pipeline stage its own
    // reproducible noise source.
    RngStream fork(uint64_t salt) {
        uint64_t mixed = gen_() ^ (salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
        return RngStream(mixed);
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace dnadiff
