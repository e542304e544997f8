#include <doctest.h>

#include <json.hpp>

#include "stylesearch/corpus.hpp"
#include "stylesearch/error.hpp"
#include "support.hpp"

using namespace stylesearch;
using nlohmann::json;
using testsupport::TempDir;

namespace {

json three_item_manifest() {
    return json::parse(R"({
      "items": [
        {"id": "a", "class": "chair", "name": "Chair A", "description": "White oak chair", "image": "items/a.jpg",
         "feature_file": "f.txt", "feature_row": 0},
        {"id": "b", "class": "table", "name": "Table B", "description": "oak table", "feature_file": "f.txt", "feature_row": 1},
        {"id": "c", "class": "wall clock", "name": "Clock", "description": ""}
      ],
      "rooms": [
        {"id": "r1", "category": "kitchen", "description": "bright kitchen", "image": "rooms/r1.jpg", "items": ["a", "b"]}
      ]
    })");
}

void write_manifest(const TempDir& dir, const json& doc) { binio::write_file(dir / "corpus.json", doc.dump()); }

Corpus rooms_corpus(const std::vector<std::set<ItemId>>& rooms) {
    Corpus c;
    for (std::size_t r = 0; r < rooms.size(); ++r) {
        Room room;
        room.id = "r" + std::to_string(r);
        room.ground_truth = rooms[r];
        for (const auto& id : rooms[r]) c.items[id] = Item{id, "chair", id, {}, {}, {}, {}};
        c.rooms[room.id] = room;
    }
    return c;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on punctuation") {
    CHECK(tokenize("White, OAK-veneer chair!") == Tokens{"white", "oak-veneer", "chair"});
    CHECK(tokenize("  ").empty());
    CHECK(tokenize("wall_clock 2") == Tokens{"wall_clock", "2"});
}

TEST_CASE("load_corpus: valid 3-item fixture") {
    TempDir dir;
    write_manifest(dir, three_item_manifest());
    binio::write_file(dir / "f.txt", "1 0 0 0\n0 1 0 0\n");
    const Corpus c = load_corpus(dir.path());
    CHECK(c.items.size() == 3);
    CHECK(c.rooms.size() == 1);
    CHECK(c.item("a").description == Tokens{"white", "oak", "chair"});
    CHECK(c.item("a").visual_feature == FeatureVector{1, 0, 0, 0});
    CHECK(c.item("b").visual_feature == FeatureVector{0, 1, 0, 0});
    CHECK_FALSE(c.item("c").visual_feature.has_value());
    CHECK(c.room("r1").ground_truth == std::set<ItemId>{"a", "b"});
    CHECK(c.item("a").image_ref == "items/a.jpg");
}

TEST_CASE("load_corpus: dangling reference names the id") {
    TempDir dir;
    json doc = three_item_manifest();
    doc["rooms"][0]["items"].push_back("x9");
    write_manifest(dir, doc);
    binio::write_file(dir / "f.txt", "1 0 0 0\n0 1 0 0\n");
    try {
        load_corpus(dir.path());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::dangling_reference);
        CHECK(std::string(e.what()).find("x9") != std::string::npos);
    }
}

TEST_CASE("load_corpus: declared dimension mismatch") {
    TempDir dir;
    json doc = json::parse(R"({"items": [{"id": "a", "class": "chair", "feature_file": "f.fvec", "feature_dim": 512}]})");
    write_manifest(dir, doc);
    vecfile::write(dir / "f.fvec", std::vector<FeatureVector>{FeatureVector(std::vector<float>(256, 1.0f))});
    try {
        load_corpus(dir.path());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::dimension_mismatch);
        CHECK(std::string(e.what()).find("item a") != std::string::npos);
    }
}

TEST_CASE("load_corpus: other failures") {
    TempDir dir;
    CHECK_THROWS_AS(load_corpus(dir.path()), Error);  // no corpus.json
    binio::write_file(dir / "corpus.json", "{not json");
    CHECK_THROWS_AS(load_corpus(dir.path()), Error);
    write_manifest(dir, json::parse(R"({"items": [{"id": "a", "class": "chair", "feature_file": "nope.fvec"}]})"));
    CHECK_THROWS_AS(load_corpus(dir.path()), Error);
    write_manifest(dir, json::parse(R"({"items": [{"id": "a", "class": "chair"}, {"id": "a", "class": "sofa"}]})"));
    CHECK_THROWS_AS(load_corpus(dir.path()), Error);
    write_manifest(dir, json::parse(R"({"items": [{"id": "a", "class": ""}]})"));
    CHECK_THROWS_AS(load_corpus(dir.path()), Error);
    write_manifest(dir, json::parse(R"({"items": []})"));
    CHECK_THROWS_AS(load_corpus(dir.path()), Error);
}

TEST_CASE("co-occurrence examples") {
    SUBCASE("rooms {a,b},{a,b},{a,c}") {
        const auto c = build_cooccurrence(rooms_corpus({{"a", "b"}, {"a", "b"}, {"a", "c"}}));
        CHECK(c.count("a", "b") == 2);
        CHECK(c.count("a", "c") == 1);
        CHECK(c.count("b", "c") == 0);
        CHECK(c.count("a", "a") == 3);
        CHECK(c.max_pair_count() == 2);
    }
    SUBCASE("single room {a}") {
        const auto c = build_cooccurrence(rooms_corpus({{"a"}}));
        CHECK(c.count("a", "a") == 1);
        CHECK(c.max_pair_count() == 0);
    }
    SUBCASE("disjoint rooms") {
        const auto c = build_cooccurrence(rooms_corpus({{"a", "b"}, {"c", "d"}}));
        for (auto x : {"a", "b"}) {
            for (auto y : {"c", "d"}) CHECK(c.count(x, y) == 0);
        }
    }
    SUBCASE("empty corpus") {
        const auto c = build_cooccurrence(Corpus{});
        CHECK(c.size() == 0);
        CHECK(c.max_pair_count() == 0);
    }
}

TEST_CASE("co-occurrence invariants against a brute-force count") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n_items = 2 + rng() % 49;
        const std::size_t n_rooms = 1 + rng() % 15;
        std::vector<std::set<ItemId>> rooms(n_rooms);
        for (auto& r : rooms) {
            const std::size_t m = 1 + rng() % 6;
            for (std::size_t j = 0; j < m; ++j) r.insert(testsupport::id_of("i", rng() % n_items));
        }
        const Corpus corpus = rooms_corpus(rooms);
        const auto c = build_cooccurrence(corpus);
        for (const auto& [x, _] : corpus.items) {
            for (const auto& [y, __] : corpus.items) {
                std::uint32_t expect = 0;
                for (const auto& r : rooms) expect += (r.count(x) && r.count(y)) ? 1 : 0;
                CHECK(c.count(x, y) == expect);
                CHECK(c.count(x, y) == c.count(y, x));
                CHECK(c.count(x, y) <= n_rooms);
                CHECK(c.count(x, y) <= std::min(c.count(x, x), c.count(y, y)));
            }
        }
    }
}

TEST_CASE("synth_corpus: clusters never mix and output is seeded") {
    SynthSpec spec;
    const SynthResult a = synth(spec, 7);
    CHECK(a.corpus.items.size() == 10);
    CHECK(a.corpus.rooms.size() == 20);
    const auto c = build_cooccurrence(a.corpus);
    std::uint32_t max_inter = 0;
    for (const auto& [x, cx] : a.item_cluster) {
        for (const auto& [y, cy] : a.item_cluster) {
            if (cx != cy) max_inter = std::max(max_inter, c.count(x, y));
        }
    }
    CHECK(max_inter == 0);

    TempDir d1, d2, d3;
    save_corpus(a.corpus, d1.path());
    save_corpus(synth_corpus(spec, 7), d2.path());
    save_corpus(synth_corpus(spec, 8), d3.path());
    for (const char* f : {"corpus.json", "features/items.fvec", "features/rooms.fvec"}) {
        CHECK(binio::read_file(d1 / f) == binio::read_file(d2 / f));
    }
    CHECK(binio::read_file(d1 / "features/items.fvec") != binio::read_file(d3 / "features/items.fvec"));
}

TEST_CASE("synth rejects empty specs") {
    SynthSpec spec;
    spec.clusters = 0;
    CHECK_THROWS_AS(synth(spec, 1), Error);
    spec = SynthSpec{};
    spec.items_per_cluster = 0;
    CHECK_THROWS_AS(synth(spec, 1), Error);
}

TEST_CASE("synth spec JSON round trip") {
    SynthSpec spec;
    spec.clusters = 3;
    spec.noise = 0.7;
    spec.classes = {"chair", "sofa"};
    CHECK(synth_spec_from_json(synth_spec_to_json(spec)) == spec);
    CHECK(synth_spec_from_json("{}") == SynthSpec{});
}

TEST_CASE("save then load reproduces the corpus") {
    SynthSpec spec;
    spec.items_per_room = 3;
    const Corpus original = synth_corpus(spec, 4);
    TempDir dir;
    save_corpus(original, dir.path());
    const Corpus loaded = load_corpus(dir.path());
    CHECK(loaded == original);
}

TEST_CASE("lexicon has 200 distinct tokens and cluster style words") {
    const auto& lex = lexicon();
    CHECK(lex.size() == 200);
    CHECK(std::set<std::string>(lex.begin(), lex.end()).size() == 200);
    CHECK(cluster_style_tokens(0) == std::vector<std::string>{"white", "black", "decorative"});
    CHECK(roi_image_ref("rooms/r1.jpg", 2) == "rooms/r1.jpg.roi2");
}
