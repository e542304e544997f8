#include "stylesearch/simd/kernels.hpp"

namespace stylesearch::simd::detail {
namespace {

// Lane layout mirrors the 4 x f64 vector registers of the SIMD variants:
// element i accumulates into lane i % 4 for the blocked prefix.

double reduce4(const double (&lane)[4]) {
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double l2_sq_f32(const float* a, const float* b, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        for (std::size_t l = 0; l < 4; ++l) {
            const double d = static_cast<double>(a[i + l]) - static_cast<double>(b[i + l]);
            lane[l] = lane[l] + d * d;
        }
    }
    double sum = reduce4(lane);
    for (std::size_t i = blocked; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum = sum + d * d;
    }
    return sum;
}

double dot_f32(const float* a, const float* b, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        for (std::size_t l = 0; l < 4; ++l) {
            lane[l] = lane[l] + static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
        }
    }
    double sum = reduce4(lane);
    for (std::size_t i = blocked; i < n; ++i) {
        sum = sum + static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return sum;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t blocked = n & ~std::size_t{3};
    for (std::size_t i = 0; i < blocked; i += 4) {
        for (std::size_t l = 0; l < 4; ++l) {
            lane[l] = lane[l] + a[i + l] * b[i + l];
        }
    }
    double sum = reduce4(lane);
    for (std::size_t i = blocked; i < n; ++i) {
        sum = sum + a[i] * b[i];
    }
    return sum;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = y[i] + alpha * x[i];
    }
}

}  // namespace

const KernelTable scalar_table{l2_sq_f32, dot_f32, dot_f64, axpy_f64};

}  // namespace stylesearch::simd::detail
