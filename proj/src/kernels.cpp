// SPDX-License-Identifier: Apache-2.0
#include "hichunk/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace hichunk::kernels {

namespace {

float dot_f32_scalar(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double dot_f32_f64_scalar(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

void add_f32_scalar(float* acc, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += x[i];
}

void scale_f32_scalar(float* a, float s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) a[i] *= s;
}

double dot_f64_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void max_f64_scalar(double* acc, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > acc[i]) acc[i] = x[i];
    }
}

void matvec_f64_scalar(const double* w, std::size_t rows, std::size_t cols,
                       const double* x, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = w + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] += acc;
    }
}

const Ops kScalar = {
    "scalar",
    dot_f32_scalar,
    dot_f32_f64_scalar,
    add_f32_scalar,
    scale_f32_scalar,
    dot_f64_scalar,
    max_f64_scalar,
    matvec_f64_scalar,
};

const Ops& pick_active() {
    const char* forced = std::getenv("HICHUNK_KERNELS");
    if (forced != nullptr) {
        if (std::strcmp(forced, "scalar") == 0) return kScalar;
        if (std::strcmp(forced, "avx2") == 0 && avx2_ops() != nullptr) return *avx2_ops();
    }
    if (const Ops* v = avx2_ops()) return *v;
    return kScalar;
}

} // namespace

const Ops& scalar_ops() {
    return kScalar;
}

const Ops& active() {
    static const Ops& chosen = pick_active();
    return chosen;
}

} // namespace hichunk::kernels
