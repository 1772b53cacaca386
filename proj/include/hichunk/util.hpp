// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace hichunk {

// FNV-1a, 64-bit. Stable across platforms and runs; used for cache keys
// and the hashed bag-of-words embedder.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0) {
    std::uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer; decorrelates related hash inputs.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::string to_hex16(std::uint64_t v);

// Linear-interpolation quantile over an unsorted sample, q in [0, 1].
// Matches the common "type 7" definition: index h = (m - 1) * q into the
// sorted sample, interpolating between floor(h) and floor(h) + 1.
double linear_quantile(std::vector<double> xs, double q);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to caller-owned slots indexed by i so output order never
// depends on scheduling. Exceptions are rethrown (first one wins).
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

inline std::size_t default_workers() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

} // namespace hichunk
