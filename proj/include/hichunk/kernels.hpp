// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Dense float kernels behind every inner loop of the engine: cosine
// scoring over the index, graph statistics, mean pooling, and the
// recurrent forward pass. Scalar reference implementations are always
// available; an AVX2/FMA variant is selected at runtime on CPUs that
// support it. The two variants are equivalence-tested against each
// other, and all callers go through the dispatch table.
//
// f32 kernels carry the retrieval path (vectors are stored as f32);
// f64 kernels carry the recurrence and the graph-threshold statistics,
// which accumulate in double.

namespace hichunk::kernels {

struct Ops {
    const char* name;

    // sum(a[i] * b[i]), f32 accumulation
    float (*dot_f32)(const float* a, const float* b, std::size_t n);
    // sum(a[i] * b[i]) accumulated in f64 over f32 data
    double (*dot_f32_f64)(const float* a, const float* b, std::size_t n);
    // acc[i] += x[i]
    void (*add_f32)(float* acc, const float* x, std::size_t n);
    // a[i] *= s
    void (*scale_f32)(float* a, float s, std::size_t n);

    double (*dot_f64)(const double* a, const double* b, std::size_t n);
    // acc[i] = max(acc[i], x[i])
    void (*max_f64)(double* acc, const double* x, std::size_t n);
    // out[r] += dot(w[r * cols .. ], x) for r in [0, rows)
    void (*matvec_f64)(const double* w, std::size_t rows, std::size_t cols,
                       const double* x, double* out);
};

// Always-available reference implementation.
const Ops& scalar_ops();

// AVX2+FMA implementation, or nullptr when the build target or the
// running CPU does not support it.
const Ops* avx2_ops();

// Variant used by the engine. Picks AVX2 when available; the
// HICHUNK_KERNELS environment variable ("scalar" or "avx2") forces a
// specific backend, read once at first use.
const Ops& active();

inline float dot(const float* a, const float* b, std::size_t n) {
    return active().dot_f32(a, b, n);
}
inline double dot_f64acc(const float* a, const float* b, std::size_t n) {
    return active().dot_f32_f64(a, b, n);
}
inline void scale_inplace(float* a, float s, std::size_t n) {
    active().scale_f32(a, s, n);
}
inline double dot(const double* a, const double* b, std::size_t n) {
    return active().dot_f64(a, b, n);
}
inline void max_inplace(double* acc, const double* x, std::size_t n) {
    active().max_f64(acc, x, n);
}
inline void matvec_add(const double* w, std::size_t rows, std::size_t cols,
                       const double* x, double* out) {
    active().matvec_f64(w, rows, cols, x, out);
}

} // namespace hichunk::kernels
