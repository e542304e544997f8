#include <doctest.h>

#include <cmath>

#include "stylesearch/corpus.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/query_encoder.hpp"
#include "stylesearch/style_embed.hpp"
#include "support.hpp"

using namespace stylesearch;
using namespace stylesearch::text;
using testsupport::TempDir;

namespace {

WordVectors toy_words() {
    return WordVectors::parse("4 3\ncozy 1 0 0\nwhite 0 1 0\noak 0 0 1\nsofa 0.5 0.5 0.5\n", "toy");
}

std::vector<ItemId> vocab_of(const Corpus& c) {
    std::vector<ItemId> v;
    for (const auto& [id, _] : c.items) v.push_back(id);
    return v;
}

void gradient_check(const EncoderModel& base, const std::vector<std::vector<double>>& inputs,
                    const std::vector<double>& target) {
    EncoderModel m = base;
    std::vector<double> grad(m.params.size(), 0.0);
    loss_and_gradient(m, inputs, target, grad);
    std::vector<double> scratch(m.params.size());
    const double h = 1e-6;
    for (std::size_t p = 0; p < m.params.size(); ++p) {
        const double saved = m.params[p];
        m.params[p] = saved + h;
        const double up = loss_and_gradient(m, inputs, target, scratch);
        m.params[p] = saved - h;
        const double down = loss_and_gradient(m, inputs, target, scratch);
        m.params[p] = saved;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(grad[p]), 1e-6});
        CAPTURE(p);
        CHECK(std::abs(numeric - grad[p]) / scale < 1e-4);
    }
}

}  // namespace

TEST_CASE("word vector file format") {
    const auto w = toy_words();
    CHECK(w.dim == 3);
    CHECK(w.vectors.size() == 4);
    REQUIRE(w.find("oak") != nullptr);
    CHECK(*w.find("oak") == FeatureVector{0, 0, 1});
    CHECK(w.find("walnut") == nullptr);
    CHECK(WordVectors::parse(w.to_text(), "again") == w);
    CHECK_THROWS_AS(WordVectors::parse("2 3\na 1 2 3\n", "short"), Error);
    CHECK_THROWS_AS(WordVectors::parse("1 3\na 1 2\n", "ragged"), Error);

    const auto bundled = WordVectors::load(testsupport::data_path("words200.txt"));
    CHECK(bundled.vectors.size() == 200);
    for (const auto& [token, _] : bundled.vectors) CHECK(token == tokenize(token).front());
}

TEST_CASE("encode examples") {
    const auto words = toy_words();
    const auto id = EncoderModel::identity(3);
    CHECK(encode(id, words, {"white"}) == FeatureVector{0, 1, 0});
    CHECK(encode(id, words, {"cozy", "cozy"}) == encode(id, words, {"cozy"}));
    CHECK(encode(id, words, {"cozy", "walnut"}) == encode(id, words, {"cozy"}));
    CHECK(encode(id, words, {"cozy", "oak"}) == FeatureVector{0.5f, 0, 0.5f});

    EncoderModel zero = id;
    zero.oov_policy = OovPolicy::zero;
    CHECK(encode(zero, words, {"cozy", "walnut"}) == FeatureVector{0.5f, 0, 0});

    try {
        encode(id, words, {"walnut", "teak"});
        FAIL("expected all_oov");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::all_oov);
        CHECK(std::string(e.what()).find("teak") != std::string::npos);
    }
    CHECK_THROWS_AS(encode(id, words, {}), Error);
    const auto report = oov_report(words, {"cozy", "walnut"});
    CHECK(report.in_vocabulary == std::vector<bool>{true, false});
}

TEST_CASE("mean_affine is order-invariant, recurrent is not") {
    const auto words = toy_words();
    const auto mean = EncoderModel::init(Variant::mean_affine, 3, 2, 4, 5);
    CHECK(encode(mean, words, {"cozy", "oak", "white"}) == encode(mean, words, {"white", "cozy", "oak"}));
    const auto rec = EncoderModel::init(Variant::recurrent, 3, 2, 4, 5);
    CHECK(encode(rec, words, {"cozy", "oak", "white"}) != encode(rec, words, {"white", "cozy", "oak"}));
}

TEST_CASE("encoder gradients match central differences") {
    SUBCASE("mean_affine, 2 tokens, d=3, n=2") {
        const auto m = EncoderModel::init(Variant::mean_affine, 3, 2, 4, 11);
        gradient_check(m, {{0.3, -0.2, 0.9}, {-0.5, 0.4, 0.1}}, {0.7, -1.1});
    }
    SUBCASE("recurrent, 3 tokens") {
        auto m = EncoderModel::init(Variant::recurrent, 3, 2, 4, 12);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-0.3, 0.3);
        for (auto& p : m.params) p += u(rng);  // non-zero biases
        gradient_check(m, {{0.3, -0.2, 0.9}, {-0.5, 0.4, 0.1}, {0.2, 0.2, -0.7}}, {0.7, -1.1});
    }
}

TEST_CASE("param counts and model files") {
    CHECK(EncoderModel::param_count(Variant::mean_affine, 3, 2, 7) == 3 * 2 + 2);
    const auto rec = EncoderModel::init(Variant::recurrent, 3, 2, 4, 5);
    CHECK(rec.params.size() == EncoderModel::param_count(Variant::recurrent, 3, 2, 4));
    TempDir dir;
    rec.save(dir / "m.ssen");
    CHECK(EncoderModel::load(dir / "m.ssen") == rec);
    CHECK(parse_variant("recurrent") == Variant::recurrent);
    CHECK_THROWS_AS(parse_variant("lstm"), Error);
}

TEST_CASE("training on a two-clique corpus") {
    const SynthResult s = synth(SynthSpec{}, 7);
    embed::CbowConfig cc;
    cc.seed = 1;
    const auto table = embed::train_cbow(embed::make_pairs(s.corpus), vocab_of(s.corpus), cc);
    const auto words = random_word_vectors(lexicon(), 16, 7);
    const auto words_before = words.to_text();

    for (Variant v : {Variant::mean_affine, Variant::recurrent}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            EncoderConfig ec;
            ec.variant = v;
            ec.seed = seed;
            ec.epochs = v == Variant::recurrent ? 100 : 300;
            const auto r = train_encoder(s.corpus, table, words, ec);
            CHECK(r.samples == 10);
            CHECK(r.final_mse <= r.initial_mse);
            for (double m : r.mse_history) CHECK(std::isfinite(m));
            CHECK(r.final_mse == doctest::Approx(training_mse(r.model, s.corpus, table, words)));
        }
    }
    CHECK(words.to_text() == words_before);

    EncoderConfig ec;
    ec.seed = 4;
    const auto a = train_encoder(s.corpus, table, words, ec);
    const auto b = train_encoder(s.corpus, table, words, ec);
    CHECK(a.model.serialize() == b.model.serialize());
    ec.epochs = 0;
    const auto untrained = train_encoder(s.corpus, table, words, ec);
    CHECK(untrained.model == EncoderModel::init(Variant::mean_affine, 16, table.dim, ec.hidden, 4));

    // Clique-0 style words retrieve clique-0 items.
    const auto style_index = build_style_index(table);
    const auto r = text_search(a.model, words, style_index, cluster_style_tokens(0), 5);
    REQUIRE(r.size() == 5);
    for (const auto& e : r) {
        CHECK(s.item_cluster.at(e.id) == 0);
        CHECK(e.modality == Modality::text);
    }
    CHECK(text_search(a.model, words, style_index, {"white"}, 50).size() == 10);
}

TEST_CASE("text search identity and scale invariance") {
    embed::CbowConfig cc;
    cc.dim = 3;
    auto table = embed::init_table({"i1", "i2", "i3"}, cc);
    const double rows[3][3] = {{1, 0, 0}, {0, 1, 0}, {0.5, 0.5, 0.5}};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) table.input_row(i)[j] = rows[i][j];
    }
    const auto index = build_style_index(table);
    const auto words = toy_words();
    const auto id = EncoderModel::identity(3);
    const auto r = text_search(id, words, index, {"white"}, 3);
    CHECK(r[0].id == "i2");
    CHECK(r[0].score == doctest::Approx(1.0));
    const auto q = encode(id, words, {"cozy", "oak"});
    std::vector<float> scaled = q.values();
    for (auto& x : scaled) x *= 4.0f;
    CHECK(index.knn_cosine(q, 3) == index.knn_cosine(FeatureVector(scaled), 3));
}
