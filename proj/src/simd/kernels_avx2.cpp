// Compiled with -mavx2 (no FMA: contraction would break bit-equality with
// the scalar reference for f64 products).
#include "stylesearch/simd/kernels.hpp"

#include <immintrin.h>

namespace stylesearch::simd::detail {
namespace {

double reduce4(__m256d acc) {
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double l2_sq_f32(const float* a, const float* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
        const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
        const __m256d d = _mm256_sub_pd(va, vb);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    double sum = reduce4(acc);
    for (std::size_t i = blocked; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum = sum + d * d;
    }
    return sum;
}

double dot_f32(const float* a, const float* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
        const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
    }
    double sum = reduce4(acc);
    for (std::size_t i = blocked; i < n; ++i) {
        sum = sum + static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return sum;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    double sum = reduce4(acc);
    for (std::size_t i = blocked; i < n; ++i) {
        sum = sum + a[i] * b[i];
    }
    return sum;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        const __m256d vy = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
    }
    for (std::size_t i = blocked; i < n; ++i) {
        y[i] = y[i] + alpha * x[i];
    }
}

}  // namespace

const KernelTable avx2_table{l2_sq_f32, dot_f32, dot_f64, axpy_f64};

}  // namespace stylesearch::simd::detail
