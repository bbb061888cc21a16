#include "microcount/rng.hpp"

#include <cmath>

namespace microcount {

double Rng::normal() {
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = next_unit();
    if (u < 1e-300) u = 1e-300;
    double v = next_unit();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

double Rng::truncated_normal(double mean, double stddev, double cut) {
    for (;;) {
        double z = normal();
        if (std::abs(z) <= cut) return mean + stddev * z;
    }
}

static uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t master, uint64_t index) {
    // Two mixing rounds keep streams of adjacent indices uncorrelated.
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

}  // namespace microcount
