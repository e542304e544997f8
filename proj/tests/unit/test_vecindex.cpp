#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stylesearch/corpus.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/vecindex.hpp"
#include "support.hpp"

using namespace stylesearch;
using testsupport::TempDir;

namespace {

std::vector<std::pair<ItemId, FeatureVector>> random_entries(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::vector<std::pair<ItemId, FeatureVector>> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(testsupport::id_of("v", i), testsupport::random_vector(rng, dim));
    return out;
}

}  // namespace

TEST_CASE("knn examples") {
    const auto index = VectorIndex::build({{"a", {1, 0}}, {"b", {0, 1}}});
    const auto r = index.knn({1, 0}, 2);
    REQUIRE(r.size() == 2);
    CHECK(r[0].id == "a");
    CHECK(r[0].score == doctest::Approx(0.0));
    CHECK(r[1].id == "b");
    CHECK(r[1].score == doctest::Approx(1.41421).epsilon(1e-5));
    CHECK(r[0].modality == Modality::visual);

    const auto self = index.knn({0, 3}, 1);
    CHECK(self[0].id == "b");
    CHECK(self[0].score == 0.0);
}

TEST_CASE("build_index examples and errors") {
    Corpus corpus;
    auto add = [&](const char* id, const char* cls, FeatureVector f) {
        corpus.items[id] = Item{id, cls, id, {}, {}, f, {}};
    };
    add("c1", "chair", {1, 0, 0, 0});
    add("c2", "chair", {0, 1, 0, 0});
    add("t1", "table", {0, 0, 1, 0});
    const auto flat = build_index(corpus, false);
    CHECK(flat.size() == 3);
    CHECK_FALSE(flat.partitioned());
    const auto parts = build_index(corpus, true);
    CHECK(parts.partition("chair").size() == 2);
    CHECK(parts.partition("table").size() == 1);
    CHECK(parts.classes() == std::vector<std::string>{"chair", "table"});
    const auto chairs = parts.knn({0, 0, 1, 0}, 5, std::string("chair"));
    CHECK(chairs.size() == 2);
    CHECK_THROWS_AS(parts.knn({1, 0, 0, 0}, 1, std::string("sofa")), Error);

    try {
        VectorIndex::build({{"a", {1, 0}}, {"a", {0, 1}}});
        FAIL("expected duplicate error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::duplicate_id);
    }
    CHECK_THROWS_AS(VectorIndex::build({{"a", {1, 0}}, {"b", {0, 1, 0}}}), Error);
    CHECK_THROWS_AS(flat.knn({1, 0}, 1), Error);
    CHECK_THROWS_AS(flat.knn({1, 0, 0, 0}, 0), Error);
}

TEST_CASE("stored vectors are normalized") {
    std::mt19937_64 rng(1);
    const auto index = VectorIndex::build(random_entries(rng, 50, 9));
    for (std::size_t i = 0; i < index.size(); ++i) CHECK(std::abs(index.vector(i).norm() - 1.0) <= 1e-6);
}

TEST_CASE("equal distances break ties by ascending id") {
    const auto index = VectorIndex::build({{"z", {0, 1}}, {"m", {0, -1}}, {"a", {-1, 0}}, {"q", {1, 0}}});
    const auto r = index.knn({1, 0}, 4);
    CHECK(ids_of(r) == std::vector<ItemId>{"q", "m", "z", "a"});
    CHECK(r[1].score == r[2].score);
}

TEST_CASE("knn invariants on random batches") {
    std::mt19937_64 rng(9);
    auto entries = random_entries(rng, 200, 16);
    const auto index = VectorIndex::build(entries);
    auto shuffled = entries;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto index2 = VectorIndex::build(shuffled);
    for (int q = 0; q < 20; ++q) {
        const auto query = testsupport::random_vector(rng, 16);
        const auto r = index.knn(query, 10);
        CHECK(r == index2.knn(query, 10));

        std::vector<float> scaled = query.values();
        for (auto& x : scaled) x *= 37.5f;
        const auto rs = index.knn(FeatureVector(scaled), 10);
        CHECK(ids_of(rs) == ids_of(r));
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(rs[i].score == doctest::Approx(r[i].score).epsilon(1e-6));

        const auto cos = index.knn_cosine(query, 10);
        CHECK(ids_of(cos) == ids_of(r));
        for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].score <= r[i].score);
        for (std::size_t i = 0; i < r.size(); ++i) {
            CHECK(r[i].score * r[i].score == doctest::Approx(2.0 - 2.0 * cos[i].score).epsilon(1e-5));
            CHECK(cos[i].modality == Modality::text);
        }

        const auto all = index.knn(query, index.size() + 5);
        CHECK(all.size() == index.size());
        std::set<ItemId> seen;
        for (const auto& e : all) seen.insert(e.id);
        CHECK(seen.size() == index.size());
    }
}

TEST_CASE("index save/load round trip") {
    std::mt19937_64 rng(2);
    std::map<ItemId, std::string> classes;
    auto entries = random_entries(rng, 30, 8);
    for (std::size_t i = 0; i < entries.size(); ++i) classes[entries[i].first] = i % 2 ? "chair" : "wall clock";
    const auto index = VectorIndex::build(entries, &classes);
    TempDir dir;
    index.save(dir / "i.ssix");
    const auto loaded = VectorIndex::load(dir / "i.ssix");
    CHECK(loaded == index);
    CHECK(loaded.partition("wall clock").size() == 15);
    CHECK(binio::read_file(dir / "i.ssix").substr(0, 4) == "SSIX");
    binio::write_file(dir / "bad.ssix", "SSIY");
    CHECK_THROWS_AS(VectorIndex::load(dir / "bad.ssix"), Error);
}
