// SPDX-License-Identifier: Apache-2.0
// Portable RNG for tests. std::mt19937 distributions differ across standard
// libraries, so frozen expectations use this instead.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace testsupport {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, bound)
    std::uint64_t below(std::uint64_t bound) { return next() % bound; }

    bool chance(double p) { return uniform() < p; }

private:
    std::uint64_t state_;
};

inline std::vector<double> uniform_vector(SplitMix64& rng, std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (auto& v : out) v = rng.uniform(lo, hi);
    return out;
}

inline std::vector<float> uniform_floats(SplitMix64& rng, std::size_t n, double lo, double hi) {
    std::vector<float> out(n);
    for (auto& v : out) v = static_cast<float>(rng.uniform(lo, hi));
    return out;
}

} // namespace testsupport
