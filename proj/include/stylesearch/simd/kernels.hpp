#pragma once

// Inner-loop arithmetic kernels with a scalar reference and vectorized
// variants. Every variant performs the same IEEE operations in the same
// order (four double accumulator lanes, fixed pairwise reduction, scalar
// tail), so results are bit-identical regardless of which level runs.

#include <cstddef>
#include <span>
#include <string_view>

namespace stylesearch::simd {

enum class Level { scalar, avx2, neon };

std::string_view level_name(Level level);

/// Best level the running CPU supports.
Level detect_level();

/// Level currently used by the free functions below. Initialized from
/// detect_level(), or from STYLESEARCH_SIMD=scalar|avx2|neon when set.
Level active_level();

/// Override the active level. Returns false (and changes nothing) if the
/// CPU or build does not support `level`.
bool set_level(Level level);

struct KernelTable {
    double (*l2_sq_f32)(const float*, const float*, std::size_t);
    double (*dot_f32)(const float*, const float*, std::size_t);
    double (*dot_f64)(const double*, const double*, std::size_t);
    void (*axpy_f64)(double, const double*, double*, std::size_t);
};

/// Kernel table for a specific level; nullptr when unavailable.
const KernelTable* kernels_for(Level level);

// Dispatching entry points. Spans must have equal length.
double l2_sq(std::span<const float> a, std::span<const float> b);
double dot(std::span<const float> a, std::span<const float> b);
double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace detail {
extern const KernelTable scalar_table;
#if defined(STYLESEARCH_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(STYLESEARCH_HAVE_NEON)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace stylesearch::simd
