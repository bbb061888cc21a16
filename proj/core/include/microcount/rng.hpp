#pragma once

#include <cstdint>
#include <random>

namespace microcount {

// All randomness in the toolkit flows through this wrapper. std::mt19937_64
// output is fully specified by the standard; the mapping helpers below avoid
// std::uniform_*_distribution, whose results are implementation-defined.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Inclusive on both ends.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(engine_() % span);
    }

    // Box-Muller, resampled until within `cut` standard deviations.
    double truncated_normal(double mean, double stddev, double cut = 2.0);

    // Standard normal via Box-Muller (one value per call, no caching, so the
    // draw sequence is position-independent).
    double normal();

  private:
    std::mt19937_64 engine_;
};

// Stateless seed mixer used to derive independent per-item streams from a
// master seed, e.g. per-image seeds in dataset generation.
uint64_t derive_seed(uint64_t master, uint64_t index);

}  // namespace microcount
