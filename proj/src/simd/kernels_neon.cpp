// AArch64 variant. Two float64x2 registers hold lanes {0,1} and {2,3} so the
// accumulation order matches the 4-lane scalar reference.
#include "stylesearch/simd/kernels.hpp"

#include <arm_neon.h>

namespace stylesearch::simd::detail {
namespace {

double reduce4(float64x2_t lo, float64x2_t hi) {
    return (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
           (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
}

double l2_sq_f32(const float* a, const float* b, std::size_t n) {
    float64x2_t lo = vdupq_n_f64(0.0);
    float64x2_t hi = vdupq_n_f64(0.0);
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        const float32x4_t va = vld1q_f32(a + i);
        const float32x4_t vb = vld1q_f32(b + i);
        const float64x2_t dlo = vsubq_f64(vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
        const float64x2_t dhi = vsubq_f64(vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb));
        lo = vaddq_f64(lo, vmulq_f64(dlo, dlo));
        hi = vaddq_f64(hi, vmulq_f64(dhi, dhi));
    }
    double sum = reduce4(lo, hi);
    for (std::size_t i = blocked; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum = sum + d * d;
    }
    return sum;
}

double dot_f32(const float* a, const float* b, std::size_t n) {
    float64x2_t lo = vdupq_n_f64(0.0);
    float64x2_t hi = vdupq_n_f64(0.0);
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        const float32x4_t va = vld1q_f32(a + i);
        const float32x4_t vb = vld1q_f32(b + i);
        lo = vaddq_f64(lo, vmulq_f64(vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb))));
        hi = vaddq_f64(hi, vmulq_f64(vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb)));
    }
    double sum = reduce4(lo, hi);
    for (std::size_t i = blocked; i < n; ++i) {
        sum = sum + static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return sum;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
    float64x2_t lo = vdupq_n_f64(0.0);
    float64x2_t hi = vdupq_n_f64(0.0);
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
        hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
    }
    double sum = reduce4(lo, hi);
    for (std::size_t i = blocked; i < n; ++i) {
        sum = sum + a[i] * b[i];
    }
    return sum;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    const std::size_t blocked = n & ~std::size_t{1};
    for (std::size_t i = 0; i < blocked; i += 2) {
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
    }
    for (std::size_t i = blocked; i < n; ++i) {
        y[i] = y[i] + alpha * x[i];
    }
}

}  // namespace

const KernelTable neon_table{l2_sq_f32, dot_f32, dot_f64, axpy_f64};

}  // namespace stylesearch::simd::detail
