#include "stylesearch/simd/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string>

namespace stylesearch::simd {
namespace {

bool supported(Level level) {
    switch (level) {
        case Level::scalar:
            return true;
        case Level::avx2:
#if defined(STYLESEARCH_HAVE_AVX2)
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Level::neon:
#if defined(STYLESEARCH_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Level initial_level() {
    if (const char* env = std::getenv("STYLESEARCH_SIMD")) {
        const std::string want = env;
        for (Level l : {Level::scalar, Level::avx2, Level::neon}) {
            if (want == level_name(l) && supported(l)) return l;
        }
    }
    return detect_level();
}

std::atomic<const KernelTable*>& active_table() {
    static std::atomic<const KernelTable*> table{kernels_for(initial_level())};
    return table;
}

std::atomic<Level>& active() {
    static std::atomic<Level> level{initial_level()};
    return level;
}

}  // namespace

std::string_view level_name(Level level) {
    switch (level) {
        case Level::scalar: return "scalar";
        case Level::avx2: return "avx2";
        case Level::neon: return "neon";
    }
    return "unknown";
}

Level detect_level() {
    if (supported(Level::avx2)) return Level::avx2;
    if (supported(Level::neon)) return Level::neon;
    return Level::scalar;
}

Level active_level() { return active().load(std::memory_order_relaxed); }

bool set_level(Level level) {
    const KernelTable* table = kernels_for(level);
    if (table == nullptr) return false;
    active_table().store(table, std::memory_order_relaxed);
    active().store(level, std::memory_order_relaxed);
    return true;
}

const KernelTable* kernels_for(Level level) {
    if (!supported(level)) return nullptr;
    switch (level) {
        case Level::scalar:
            return &detail::scalar_table;
        case Level::avx2:
#if defined(STYLESEARCH_HAVE_AVX2)
            return &detail::avx2_table;
#else
            return nullptr;
#endif
        case Level::neon:
#if defined(STYLESEARCH_HAVE_NEON)
            return &detail::neon_table;
#else
            return nullptr;
#endif
    }
    return nullptr;
}

double l2_sq(std::span<const float> a, std::span<const float> b) {
    assert(a.size() == b.size());
    return active_table().load(std::memory_order_relaxed)->l2_sq_f32(a.data(), b.data(), a.size());
}

double dot(std::span<const float> a, std::span<const float> b) {
    assert(a.size() == b.size());
    return active_table().load(std::memory_order_relaxed)->dot_f32(a.data(), b.data(), a.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    return active_table().load(std::memory_order_relaxed)->dot_f64(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    active_table().load(std::memory_order_relaxed)->axpy_f64(alpha, x.data(), y.data(), x.size());
}

}  // namespace stylesearch::simd
