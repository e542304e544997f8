#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "stylesearch/simd/kernels.hpp"

using namespace stylesearch::simd;

namespace {

std::vector<const KernelTable*> available() {
    std::vector<const KernelTable*> out;
    for (Level l : {Level::scalar, Level::avx2, Level::neon}) {
        if (const auto* t = kernels_for(l)) out.push_back(t);
    }
    return out;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("scalar kernels compute the plain definitions") {
    const auto& s = detail::scalar_table;
    const float a[] = {1, 2, 3, 4, 5};
    const float b[] = {5, 4, 3, 2, 1};
    CHECK(s.l2_sq_f32(a, b, 5) == doctest::Approx(16 + 4 + 0 + 4 + 16));
    CHECK(s.dot_f32(a, b, 5) == doctest::Approx(5 + 8 + 9 + 8 + 5));
    const double x[] = {1, -2, 0.5};
    double y[] = {1, 1, 1};
    s.axpy_f64(2.0, x, y, 3);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == -3.0);
    CHECK(y[2] == 2.0);
    CHECK(s.dot_f64(x, x, 3) == doctest::Approx(5.25));
    CHECK(s.l2_sq_f32(a, b, 0) == 0.0);
}

TEST_CASE("every available kernel level is bit-identical to scalar") {
    std::mt19937_64 rng(11);
    std::normal_distribution<float> nf(0.0f, 3.0f);
    std::normal_distribution<double> nd(0.0, 3.0);
    const auto tables = available();
    REQUIRE(!tables.empty());
    const auto& ref = detail::scalar_table;
    for (std::size_t n = 0; n < 300; n += 1 + n / 7) {
        std::vector<float> a(n), b(n);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = nf(rng);
            b[i] = nf(rng);
            x[i] = nd(rng);
            y[i] = nd(rng);
        }
        for (const auto* t : tables) {
            CAPTURE(n);
            CHECK(same_bits(t->l2_sq_f32(a.data(), b.data(), n), ref.l2_sq_f32(a.data(), b.data(), n)));
            CHECK(same_bits(t->dot_f32(a.data(), b.data(), n), ref.dot_f32(a.data(), b.data(), n)));
            CHECK(same_bits(t->dot_f64(x.data(), y.data(), n), ref.dot_f64(x.data(), y.data(), n)));
            std::vector<double> y1 = y, y2 = y;
            t->axpy_f64(0.37, x.data(), y1.data(), n);
            ref.axpy_f64(0.37, x.data(), y2.data(), n);
            CHECK(std::memcmp(y1.data(), y2.data(), n * sizeof(double)) == 0);
        }
    }
}

TEST_CASE("set_level switches dispatch and rejects unsupported levels") {
    const Level before = active_level();
    REQUIRE(set_level(Level::scalar));
    CHECK(active_level() == Level::scalar);
    const float a[] = {1, 2};
    const float b[] = {3, 5};
    CHECK(dot(std::span<const float>(a), std::span<const float>(b)) == 13.0);
    for (Level l : {Level::avx2, Level::neon}) {
        if (kernels_for(l) == nullptr) {
            CHECK_FALSE(set_level(l));
            CHECK(active_level() == Level::scalar);
        }
    }
    set_level(before);
    CHECK(level_name(Level::avx2) == "avx2");
}
