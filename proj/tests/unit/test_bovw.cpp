#include <doctest.h>

#include <cmath>

#include "stylesearch/bovw.hpp"
#include "stylesearch/error.hpp"
#include "support.hpp"

using namespace stylesearch;
using namespace stylesearch::bovw;
using testsupport::TempDir;

namespace {

DescriptorSet blob(std::mt19937_64& rng, const std::string& ref, std::vector<float> centre, std::size_t n, double spread) {
    DescriptorSet s{ref, {}};
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spread));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> v = centre;
        for (auto& x : v) x += noise(rng);
        s.descriptors.emplace_back(std::move(v));
    }
    return s;
}

Codebook two_word_codebook() {
    Codebook cb;
    cb.k = 2;
    cb.dim = 2;
    cb.centroids = {{0, 0}, {10, 0}};
    return cb;
}

}  // namespace

TEST_CASE("k-means recovers two separated blobs") {
    std::mt19937_64 rng(4);
    std::vector<DescriptorSet> sets = {blob(rng, "a", {0, 0, 0}, 200, 0.5), blob(rng, "b", {8, 8, 8}, 200, 0.5)};
    std::vector<double> mean_a(3, 0.0), mean_b(3, 0.0);
    for (const auto& d : sets[0].descriptors) for (int j = 0; j < 3; ++j) mean_a[j] += d[j] / 200.0;
    for (const auto& d : sets[1].descriptors) for (int j = 0; j < 3; ++j) mean_b[j] += d[j] / 200.0;

    const auto cb = train_codebook(sets, {2, 1, 100, 1e-6});
    REQUIRE(cb.centroids.size() == 2);
    auto close_to = [](const FeatureVector& c, const std::vector<double>& m) {
        double d = 0.0;
        for (int j = 0; j < 3; ++j) d += (c[j] - m[j]) * (c[j] - m[j]);
        return std::sqrt(d) < 0.1;
    };
    const bool order1 = close_to(cb.centroids[0], mean_a) && close_to(cb.centroids[1], mean_b);
    const bool order2 = close_to(cb.centroids[0], mean_b) && close_to(cb.centroids[1], mean_a);
    CHECK((order1 || order2));
}

TEST_CASE("k equal to the descriptor count gives zero inertia") {
    std::mt19937_64 rng(5);
    std::vector<DescriptorSet> sets = {blob(rng, "a", {0, 0}, 6, 1.0), blob(rng, "b", {3, 3}, 4, 1.0)};
    const auto cb = train_codebook(sets, {10, 2, 50, 1e-9});
    CHECK(inertia(sets, cb) == doctest::Approx(0.0));
}

TEST_CASE("k-means is seeded, inertia never rises, centroids stay finite") {
    std::mt19937_64 rng(6);
    std::vector<DescriptorSet> sets;
    for (int i = 0; i < 5; ++i) sets.push_back(blob(rng, "s" + std::to_string(i), {float(i), float(-i), 0, 1}, 40, 1.5));
    const TrainConfig cfg{12, 99, 100, 1e-8};
    const auto a = train_codebook(sets, cfg);
    const auto b = train_codebook(sets, cfg);
    CHECK(a.serialize() == b.serialize());
    CHECK(a.centroids == b.centroids);
    REQUIRE(!a.inertia_history.empty());
    for (std::size_t i = 1; i < a.inertia_history.size(); ++i) {
        CHECK(a.inertia_history[i] <= a.inertia_history[i - 1]);
    }
    for (const auto& c : a.centroids) CHECK(c.is_finite());
    const auto other = train_codebook(sets, {12, 100, 100, 1e-8});
    CHECK(other.serialize() != a.serialize());
}

TEST_CASE("codebook training errors") {
    std::mt19937_64 rng(7);
    std::vector<DescriptorSet> sets = {blob(rng, "a", {0, 0}, 3, 1.0)};
    CHECK_THROWS_AS(train_codebook(sets, {4, 1, 10, 1e-6}), Error);
    CHECK_THROWS_AS(train_codebook(sets, {1, 1, 10, 1e-6}), Error);
}

TEST_CASE("quantize examples") {
    const auto cb = two_word_codebook();
    const auto empty = quantize({"e", {}}, cb);
    CHECK(empty.empty);
    CHECK(empty.counts == FeatureVector{0, 0});

    const auto all0 = quantize({"x", {{0, 1}, {1, 0}, {-1, 0}, {2, 2}}}, cb);
    CHECK_FALSE(all0.empty);
    CHECK(all0.counts == FeatureVector{1, 0});

    const auto split = quantize({"y", {{0, 0}, {1, 1}, {9, 0}}}, cb);
    CHECK(split.counts[0] == doctest::Approx(0.8944).epsilon(1e-4));
    CHECK(split.counts[1] == doctest::Approx(0.4472).epsilon(1e-4));

    // Equidistant descriptor goes to the lower index.
    CHECK(quantize({"t", {{5, 0}}}, cb).counts == FeatureVector{1, 0});
    CHECK_THROWS_AS(quantize({"z", {{1, 2, 3}}}, cb), Error);
}

TEST_CASE("non-empty histograms have unit norm") {
    std::mt19937_64 rng(8);
    std::vector<DescriptorSet> sets = {blob(rng, "a", {0, 0, 0}, 50, 2.0)};
    const auto cb = train_codebook(sets, {7, 3, 50, 1e-6});
    for (int i = 0; i < 10; ++i) {
        const auto h = quantize(blob(rng, "q", {0, 0, 0}, 1 + i * 3, 2.0), cb);
        CHECK(std::abs(h.counts.norm() - 1.0) <= 1e-6);
    }
}

TEST_CASE("histogram search") {
    std::mt19937_64 rng(10);
    std::vector<DescriptorSet> train;
    std::map<std::string, DescriptorSet> images;
    for (int i = 0; i < 4; ++i) {
        images.emplace("A" + std::to_string(i), blob(rng, "A" + std::to_string(i), {0, 0}, 30, 0.5));
        images.emplace("B" + std::to_string(i), blob(rng, "B" + std::to_string(i), {10, 10}, 30, 0.5));
    }
    for (const auto& [_, s] : images) train.push_back(s);
    const auto cb = train_codebook(train, {4, 1, 100, 1e-6});
    std::map<std::string, Histogram> hists;
    for (const auto& [ref, s] : images) hists[ref] = quantize(s, cb);
    hists["empty"] = quantize({"empty", {}}, cb);
    std::vector<std::string> skipped;
    const auto index = build_histogram_index(hists, &skipped);
    CHECK(skipped == std::vector<std::string>{"empty"});
    CHECK(index.size() == 8);

    const auto self = search(index, hists["A2"], 1);
    CHECK(self[0].score == doctest::Approx(0.0));

    const auto r = search(index, quantize(blob(rng, "q", {0, 0}, 30, 0.5), cb), 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r[i].id[0] == 'A');
    for (std::size_t i = 4; i < 8; ++i) CHECK(r[i].id[0] == 'B');

    CHECK(search(index, hists["B1"], 100).size() == 8);
    CHECK_THROWS_AS(search(index, hists["empty"], 3), Error);
}

TEST_CASE("codebook and descriptor files") {
    std::mt19937_64 rng(12);
    std::vector<DescriptorSet> sets = {blob(rng, "a", {0, 0}, 20, 1.0)};
    const auto cb = train_codebook(sets, {3, 5, 20, 1e-6});
    TempDir dir;
    cb.save(dir / "cb.sscb");
    const auto loaded = Codebook::load(dir / "cb.sscb");
    CHECK(loaded.centroids == cb.centroids);
    CHECK(loaded.k == 3);
    CHECK(loaded.training_seed == 5);

    vecfile::write(descriptor_path(dir.path(), "items/a.jpg"), sets[0].descriptors);
    CHECK(std::filesystem::exists(dir / "items/a.jpg.desc"));
    CHECK(load_descriptors(dir.path(), "items/a.jpg").descriptors == sets[0].descriptors);
    CHECK_THROWS_AS(load_descriptors(dir.path(), "items/none.jpg"), Error);
}
