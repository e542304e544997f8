#include <doctest.h>

#include <cmath>

#include "stylesearch/corpus.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/style_embed.hpp"
#include "support.hpp"

using namespace stylesearch;
using namespace stylesearch::embed;
using testsupport::TempDir;

namespace {

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

std::vector<ItemId> vocab_of(const Corpus& c) {
    std::vector<ItemId> v;
    for (const auto& [id, _] : c.items) v.push_back(id);
    return v;
}

double loss_at(const EmbeddingTable& t, const std::vector<std::size_t>& ctx, std::size_t target,
               const std::vector<std::size_t>& negs) {
    return pair_gradient(t, ctx, target, negs).loss;
}

}  // namespace

TEST_CASE("make_pairs examples") {
    const auto abc = make_pairs(rooms_corpus({{"a", "b", "c"}}));
    REQUIRE(abc.size() == 3);
    CHECK(abc[0] == TrainingPair{"a", {"b", "c"}});
    CHECK(abc[1] == TrainingPair{"b", {"a", "c"}});
    CHECK(abc[2] == TrainingPair{"c", {"a", "b"}});
    CHECK(make_pairs(rooms_corpus({{"a"}})).empty());
    CHECK(make_pairs(rooms_corpus({{"a", "b"}, {"a", "b"}})).size() == 4);
}

TEST_CASE("zero epochs returns the seeded initialization") {
    const Corpus c = synth_corpus(SynthSpec{}, 7);
    CbowConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 3;
    const auto t = train_cbow(make_pairs(c), vocab_of(c), cfg);
    const auto init = init_table(vocab_of(c), cfg);
    CHECK(t.input == init.input);
    CHECK(t.output == init.output);
    for (double x : t.input) CHECK(std::abs(x) <= 0.5 / static_cast<double>(cfg.dim));
    for (double x : t.output) CHECK(x == 0.0);
}

TEST_CASE("training errors") {
    CbowConfig cfg;
    CHECK_THROWS_AS(train_cbow({}, {"a", "b"}, cfg), Error);
    const Corpus small = rooms_corpus({{"a", "b"}});
    CHECK_THROWS_AS(train_cbow(make_pairs(small), vocab_of(small), cfg), Error);  // vocab 2 < negatives+1
    CHECK_THROWS_AS(train_cbow({{"a", {"zz"}}}, {"a", "b", "c", "d", "e", "f"}, cfg), Error);
}

TEST_CASE("pair gradient matches central differences") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    CbowConfig cfg;
    cfg.dim = 4;
    EmbeddingTable t = init_table({"a", "b", "c"}, cfg);
    for (auto& x : t.input) x = u(rng);
    for (auto& x : t.output) x = u(rng);
    const std::vector<std::size_t> ctx = {0, 2};
    const std::vector<std::size_t> negs = {2};
    const std::size_t target = 1;
    const auto g = pair_gradient(t, ctx, target, negs);
    const double h = 1e-6;
    auto check_param = [&](double& p, double analytic) {
        const double saved = p;
        p = saved + h;
        const double up = loss_at(t, ctx, target, negs);
        p = saved - h;
        const double down = loss_at(t, ctx, target, negs);
        p = saved;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        CHECK(std::abs(numeric - analytic) / scale < 1e-4);
    };
    for (std::size_t c : ctx) {
        for (std::size_t j = 0; j < t.dim; ++j) {
            // Row 2 is both context and negative: input and output gradients are separate.
            check_param(t.input_row(c)[j], g.d_hidden[j] / static_cast<double>(ctx.size()));
        }
    }
    for (const auto& [row, d] : g.d_outputs) {
        for (std::size_t j = 0; j < t.dim; ++j) check_param(t.output_row(row)[j], d[j]);
    }
    CHECK(g.d_outputs.front().first == target);
}

TEST_CASE("two-clique training separates cliques and lowers the loss") {
    const SynthResult s = synth(SynthSpec{}, 7);
    std::map<ItemId, std::string> labels;
    for (const auto& [id, c] : s.item_cluster) labels[id] = std::to_string(c);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CbowConfig cfg;
        cfg.seed = seed;
        const auto t = train_cbow(make_pairs(s.corpus), vocab_of(s.corpus), cfg);
        REQUIRE(t.epoch_loss.size() == cfg.epochs);
        CHECK(t.epoch_loss.back() < t.epoch_loss.front());
        const std::size_t tail = cfg.epochs / 10;
        for (std::size_t e = cfg.epochs - tail; e < cfg.epochs; ++e) CHECK(t.epoch_loss[e] < t.epoch_loss.front());
        const auto q = cluster_quality(t, labels);
        CHECK(q.inter - q.intra > 0.2);
        for (double x : t.input) CHECK(std::isfinite(x));
    }
}

TEST_CASE("training is deterministic and tables round-trip") {
    const Corpus c = synth_corpus(SynthSpec{}, 2);
    CbowConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 9;
    const auto a = train_cbow(make_pairs(c), vocab_of(c), cfg);
    const auto b = train_cbow(make_pairs(c), vocab_of(c), cfg);
    CHECK(a.serialize() == b.serialize());
    cfg.seed = 10;
    CHECK(train_cbow(make_pairs(c), vocab_of(c), cfg).serialize() != a.serialize());

    TempDir dir;
    a.save(dir / "e.ssem");
    const auto loaded = EmbeddingTable::load(dir / "e.ssem");
    CHECK(loaded.same_parameters(a));
    CHECK(loaded.embedding("item0000").dim() == a.dim);
    CHECK(a.embeddings().size() == a.vocab.size());
}

TEST_CASE("items outside multi-item rooms stay untrained") {
    Corpus c = rooms_corpus({{"a", "b", "c"}, {"a", "b", "d"}, {"c", "d", "e"}, {"f", "g", "h"}, {"lonely"}});
    CbowConfig cfg;
    cfg.epochs = 3;
    cfg.negatives = 2;
    const auto t = train_cbow(make_pairs(c), vocab_of(c), cfg);
    CHECK_FALSE(t.trained[*t.index_of("lonely")]);
    CHECK(t.trained[*t.index_of("a")]);
    const auto init = init_table(vocab_of(c), cfg);
    const auto i = *t.index_of("lonely");
    for (std::size_t j = 0; j < t.dim; ++j) CHECK(t.input_row(i)[j] == init.input_row(i)[j]);
}

TEST_CASE("cluster_quality examples") {
    CbowConfig cfg;
    cfg.dim = 2;
    EmbeddingTable same = init_table({"a", "b", "c", "d"}, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
        same.input_row(i)[0] = 1.0;
        same.input_row(i)[1] = 2.0;
    }
    const std::map<ItemId, std::string> labels = {{"a", "x"}, {"b", "x"}, {"c", "y"}, {"d", "y"}};
    auto q = cluster_quality(same, labels);
    CHECK(q.intra == doctest::Approx(0.0));
    CHECK(q.inter == doctest::Approx(0.0));

    EmbeddingTable onehot = same;
    for (std::size_t i = 0; i < 4; ++i) {
        onehot.input_row(i)[0] = i < 2 ? 1.0 : 0.0;
        onehot.input_row(i)[1] = i < 2 ? 0.0 : 1.0;
    }
    q = cluster_quality(onehot, labels);
    CHECK(q.intra == doctest::Approx(0.0));
    CHECK(q.inter == doctest::Approx(1.0));
    CHECK_THROWS_AS(cluster_quality(onehot, {{"a", "x"}}), Error);
}
