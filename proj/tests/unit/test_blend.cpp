#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "stylesearch/blend.hpp"
#include "stylesearch/error.hpp"
#include "support.hpp"

using namespace stylesearch;
using namespace stylesearch::blend;

namespace {

RankedList list_of(std::initializer_list<const char*> ids, Modality m, double start = 0.1) {
    RankedList out;
    double s = start;
    for (const char* id : ids) {
        out.push_back({id, s, m});
        s += 0.1;
    }
    return out;
}

std::map<ItemId, FeatureVector> line_features() {
    // Points on the unit circle: angle grows with the letter.
    std::map<ItemId, FeatureVector> f;
    const char* ids[] = {"a", "b", "c", "d", "e", "f"};
    for (int i = 0; i < 6; ++i) {
        const double t = 0.2 * i;
        f[ids[i]] = FeatureVector{static_cast<float>(std::cos(t)), static_cast<float>(std::sin(t))};
    }
    return f;
}

FeatureLookup lookup_in(const std::map<ItemId, FeatureVector>& f) {
    return [&f](const ItemId& id) -> std::optional<FeatureVector> {
        const auto it = f.find(id);
        if (it == f.end()) return std::nullopt;
        return normalize(it->second);
    };
}

}  // namespace

TEST_CASE("simple_blend examples") {
    Request r;
    r.strategy = Strategy::simple;
    r.visual_results = list_of({"a", "b"}, Modality::visual);
    r.text_results = list_of({"a", "c"}, Modality::text);
    r.k = 4;
    CHECK(ids_of(simple_blend(r)) == std::vector<ItemId>{"a", "c", "b"});

    r.visual_results = list_of({"a", "b", "c", "d"}, Modality::visual);
    r.text_results.clear();
    r.k = 3;
    CHECK(ids_of(simple_blend(r)) == std::vector<ItemId>{"a", "b", "c"});

    r.visual_results = list_of({"a", "b", "c"}, Modality::visual);
    r.text_results = list_of({"x", "y", "z"}, Modality::text);
    r.k = 5;
    const auto out = simple_blend(r);
    CHECK(ids_of(out) == std::vector<ItemId>{"a", "x", "b", "y", "c"});
    CHECK(out[1].modality == Modality::text);
    CHECK(out[1].score == doctest::Approx(0.1));

    r.visual_results.clear();
    r.text_results.clear();
    CHECK_THROWS_AS(simple_blend(r), Error);
}

TEST_CASE("simple_blend invariants") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> len(0, 8), pick(0, 11);
        Request r;
        r.k = 1 + rng() % 10;
        std::set<ItemId> seen_v, seen_t;
        for (int i = len(rng); i > 0; --i) {
            const auto id = testsupport::id_of("i", pick(rng));
            if (seen_v.insert(id).second) r.visual_results.push_back({id, 0.0, Modality::visual});
        }
        for (int i = len(rng); i > 0; --i) {
            const auto id = testsupport::id_of("i", pick(rng));
            if (seen_t.insert(id).second) r.text_results.push_back({id, 0.0, Modality::text});
        }
        if (r.visual_results.empty() && r.text_results.empty()) continue;
        const auto out = simple_blend(r);
        std::set<ItemId> uni = seen_v;
        uni.insert(seen_t.begin(), seen_t.end());
        CHECK(out.size() == std::min(r.k, uni.size()));
        std::set<ItemId> ids;
        for (const auto& e : out) {
            CHECK(ids.insert(e.id).second);
            CHECK(uni.contains(e.id));
        }
        if (!r.visual_results.empty()) CHECK(out.front().id == r.visual_results.front().id);
    }
}

TEST_CASE("feature_blend re-ranks text candidates in visual space") {
    const auto f = line_features();
    Request r;
    r.query_visual_feature = FeatureVector{1.0f, 0.0f};  // equals "a"
    r.visual_results = {{"b", euclidean(normalize(f.at("b")), FeatureVector{1, 0}), Modality::visual},
                        {"d", euclidean(normalize(f.at("d")), FeatureVector{1, 0}), Modality::visual}};
    r.text_results = list_of({"e", "a", "c"}, Modality::text, 0.9);
    r.k = 3;
    const auto out = feature_blend(r, lookup_in(f));
    REQUIRE(out.size() == 3);
    CHECK(ids_of(out) == std::vector<ItemId>{"a", "b", "c"});
    CHECK(out[0].modality == Modality::text);
    CHECK(out[0].score == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(out[1].modality == Modality::visual);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].score <= out[i].score);

    SUBCASE("duplicates are tagged blended") {
        r.text_results = list_of({"b"}, Modality::text);
        const auto dup = feature_blend(r, lookup_in(f));
        CHECK(ids_of(dup) == std::vector<ItemId>{"b", "d"});
        CHECK(dup[0].modality == Modality::blended);
    }
    SUBCASE("identical lists agree with simple blending") {
        r.text_results = r.visual_results;
        for (auto& e : r.text_results) e.modality = Modality::text;
        r.k = 2;
        CHECK(ids_of(feature_blend(r, lookup_in(f))) == ids_of(simple_blend(r)));
    }
    SUBCASE("errors") {
        r.text_results = list_of({"zz"}, Modality::text);
        CHECK_THROWS_AS(feature_blend(r, lookup_in(f)), Error);
        r.text_results.clear();
        r.query_visual_feature.reset();
        CHECK_THROWS_AS(feature_blend(r, lookup_in(f)), Error);
    }
}

TEST_CASE("feature_blend ties resolve by id") {
    std::map<ItemId, FeatureVector> f = {{"m", {0, 1}}, {"c", {0, -1}}};
    Request r;
    r.query_visual_feature = FeatureVector{1, 0};
    r.text_results = {{"m", 0.9, Modality::text}, {"c", 0.8, Modality::text}};
    r.k = 2;
    CHECK(ids_of(feature_blend(r, lookup_in(f))) == std::vector<ItemId>{"c", "m"});
}

TEST_CASE("strategy names") {
    CHECK(parse_strategy("simple") == Strategy::simple);
    CHECK(parse_strategy(strategy_name(Strategy::feature_similarity)) == Strategy::feature_similarity);
    CHECK_THROWS_AS(parse_strategy("magic"), Error);
}
