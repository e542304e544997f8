#include "stylesearch/style_embed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stylesearch/corpus.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/simd/kernels.hpp"

namespace stylesearch::embed {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// -log(sigmoid(x))
double neg_log_sigmoid(double x) {
    if (x >= 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

}  // namespace

std::vector<TrainingPair> make_pairs(const Corpus& corpus) {
    std::vector<TrainingPair> pairs;
    for (const auto& [_, room] : corpus.rooms) {
        if (room.ground_truth.size() < 2) continue;
        for (const auto& target : room.ground_truth) {
            TrainingPair p;
            p.target = target;
            for (const auto& other : room.ground_truth) {
                if (other != target) p.context.push_back(other);
            }
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

std::optional<std::size_t> EmbeddingTable::index_of(const ItemId& id) const {
    auto it = std::lower_bound(vocab.begin(), vocab.end(), id);
    if (it == vocab.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - vocab.begin());
}

FeatureVector EmbeddingTable::embedding(const ItemId& id) const {
    const auto i = index_of(id);
    if (!i) throw Error(ErrorCode::not_found, "item " + id + " has no style embedding");
    std::vector<float> v(dim);
    auto row = input_row(*i);
    for (std::size_t j = 0; j < dim; ++j) v[j] = static_cast<float>(row[j]);
    return FeatureVector(std::move(v));
}

std::vector<std::pair<ItemId, FeatureVector>> EmbeddingTable::embeddings() const {
    std::vector<std::pair<ItemId, FeatureVector>> out;
    out.reserve(vocab.size());
    for (const auto& id : vocab) out.emplace_back(id, embedding(id));
    return out;
}

EmbeddingTable init_table(std::vector<ItemId> vocab, const CbowConfig& config) {
    if (config.dim == 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be positive");
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    EmbeddingTable t;
    t.dim = config.dim;
    t.vocab = std::move(vocab);
    t.config = config;
    t.input.resize(t.vocab.size() * t.dim);
    t.output.assign(t.vocab.size() * t.dim, 0.0);
    t.trained.assign(t.vocab.size(), false);
    std::mt19937_64 rng(config.seed);
    const double half = 0.5 / static_cast<double>(t.dim);
    std::uniform_real_distribution<double> u(-half, half);
    for (auto& x : t.input) x = u(rng);
    return t;
}

PairGradient pair_gradient(const EmbeddingTable& table, std::span<const std::size_t> context, std::size_t target,
                           std::span<const std::size_t> negatives) {
    const std::size_t dim = table.dim;
    std::vector<double> h(dim, 0.0);
    for (std::size_t c : context) simd::axpy(1.0, table.input_row(c), h);
    const double inv = 1.0 / static_cast<double>(context.size());
    for (auto& x : h) x *= inv;

    PairGradient g;
    g.d_hidden.assign(dim, 0.0);
    auto term = [&](std::size_t row, double label) {
        const auto out = table.output_row(row);
        const double score = simd::dot(std::span<const double>(out), std::span<const double>(h));
        // label 1: -log s(x), d/dx = s(x) - 1; label 0: -log s(-x), d/dx = s(x)
        g.loss += label > 0.5 ? neg_log_sigmoid(score) : neg_log_sigmoid(-score);
        const double coeff = sigmoid(score) - label;
        std::vector<double> d_out(dim);
        for (std::size_t j = 0; j < dim; ++j) d_out[j] = coeff * h[j];
        simd::axpy(coeff, out, g.d_hidden);
        g.d_outputs.emplace_back(row, std::move(d_out));
    };
    term(target, 1.0);
    for (std::size_t n : negatives) term(n, 0.0);
    return g;
}

EmbeddingTable train_cbow(const std::vector<TrainingPair>& pairs, std::vector<ItemId> vocab, const CbowConfig& config) {
    if (pairs.empty()) throw Error(ErrorCode::invalid_argument, "no training pairs (no room has two or more items)");
    if (config.epochs > 0 && !(config.learning_rate > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
    }
    EmbeddingTable t = init_table(std::move(vocab), config);
    if (t.vocab.size() < config.negatives + 1) {
        throw Error(ErrorCode::invalid_argument, "vocabulary of " + std::to_string(t.vocab.size()) +
                                                     " items is smaller than negatives+1=" +
                                                     std::to_string(config.negatives + 1));
    }

    struct Example {
        std::size_t target;
        std::vector<std::size_t> context;
    };
    std::vector<Example> examples;
    std::vector<double> freq(t.vocab.size(), 0.0);
    examples.reserve(pairs.size());
    for (const auto& p : pairs) {
        auto idx = [&](const ItemId& id) {
            auto i = t.index_of(id);
            if (!i) throw Error(ErrorCode::not_found, "training pair item " + id + " not in vocabulary");
            return *i;
        };
        if (p.context.empty()) throw Error(ErrorCode::invalid_argument, "training pair for " + p.target + " has empty context");
        Example e{idx(p.target), {}};
        for (const auto& c : p.context) e.context.push_back(idx(c));
        freq[e.target] += 1.0;
        t.trained[e.target] = true;
        for (std::size_t c : e.context) t.trained[c] = true;
        examples.push_back(std::move(e));
    }

    std::vector<double> weights(freq.size());
    for (std::size_t i = 0; i < freq.size(); ++i) weights[i] = std::pow(freq[i], 0.75);
    std::discrete_distribution<std::size_t> noise(weights.begin(), weights.end());

    // Separate stream from the initialization so zero epochs equals init.
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const double total_steps = static_cast<double>(config.epochs * examples.size());
    double step = 0.0;
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> negs;
    std::vector<char> blocked(t.vocab.size(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss = 0.0;
        for (std::size_t ex : order) {
            const auto& e = examples[ex];
            // Items sharing the room are never negatives.
            negs.clear();
            blocked[e.target] = 1;
            for (std::size_t c : e.context) blocked[c] = 1;
            for (std::size_t n = 0; n < config.negatives; ++n) {
                std::size_t draw = noise(rng);
                for (int tries = 0; blocked[draw] && tries < 16; ++tries) draw = noise(rng);
                if (!blocked[draw]) negs.push_back(draw);
            }
            blocked[e.target] = 0;
            for (std::size_t c : e.context) blocked[c] = 0;
            const double lr = config.learning_rate * std::max(1e-4, 1.0 - step / total_steps);
            step += 1.0;
            const PairGradient g = pair_gradient(t, e.context, e.target, negs);
            loss += g.loss;
            for (const auto& [row, d] : g.d_outputs) simd::axpy(-lr, d, t.output_row(row));
            const double share = -lr / static_cast<double>(e.context.size());
            for (std::size_t c : e.context) simd::axpy(share, g.d_hidden, t.input_row(c));
        }
        loss /= static_cast<double>(examples.size());
        if (!std::isfinite(loss)) throw Error(ErrorCode::degenerate, "CBOW loss diverged at epoch " + std::to_string(epoch));
        for (double x : t.input) {
            if (!std::isfinite(x)) throw Error(ErrorCode::degenerate, "non-finite embedding at epoch " + std::to_string(epoch));
        }
        t.epoch_loss.push_back(loss);
    }
    return t;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(simd::dot(a, a));
    const double nb = std::sqrt(simd::dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return simd::dot(a, b) / (na * nb);
}

ClusterQuality cluster_quality(const EmbeddingTable& table, const std::map<ItemId, std::string>& labels) {
    std::vector<const std::string*> label(table.vocab.size());
    for (std::size_t i = 0; i < table.vocab.size(); ++i) {
        auto it = labels.find(table.vocab[i]);
        if (it == labels.end()) throw Error(ErrorCode::not_found, "no cluster label for item " + table.vocab[i]);
        label[i] = &it->second;
    }
    double intra = 0.0;
    double inter = 0.0;
    std::size_t n_intra = 0;
    std::size_t n_inter = 0;
    for (std::size_t i = 0; i < table.vocab.size(); ++i) {
        for (std::size_t j = i + 1; j < table.vocab.size(); ++j) {
            const double d = 1.0 - cosine(table.input_row(i), table.input_row(j));
            if (*label[i] == *label[j]) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    }
    return {n_intra ? intra / static_cast<double>(n_intra) : 0.0, n_inter ? inter / static_cast<double>(n_inter) : 0.0};
}

std::string EmbeddingTable::serialize() const {
    std::string out = "SSEM";
    binio::put_u32(out, 1);
    binio::put_u32(out, static_cast<std::uint32_t>(dim));
    binio::put_u32(out, static_cast<std::uint32_t>(vocab.size()));
    binio::put_u64(out, config.dim);
    binio::put_u64(out, config.epochs);
    binio::put_f64(out, config.learning_rate);
    binio::put_u64(out, config.negatives);
    binio::put_u64(out, config.seed);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        binio::put_str(out, vocab[i]);
        binio::put_u32(out, trained[i] ? 1u : 0u);
    }
    for (double x : input) binio::put_f64(out, x);
    for (double x : output) binio::put_f64(out, x);
    return out;
}

void EmbeddingTable::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
    binio::Reader r(binio::read_file(path), path.string());
    if (r.bytes(4) != "SSEM") throw Error(ErrorCode::parse, path.string() + ": not an embedding table");
    if (r.u32() != 1) throw Error(ErrorCode::parse, path.string() + ": unsupported embedding table version");
    EmbeddingTable t;
    t.dim = r.u32();
    const std::uint32_t count = r.u32();
    t.config.dim = r.u64();
    t.config.epochs = r.u64();
    t.config.learning_rate = r.f64();
    t.config.negatives = r.u64();
    t.config.seed = r.u64();
    for (std::uint32_t i = 0; i < count; ++i) {
        t.vocab.push_back(r.str());
        t.trained.push_back(r.u32() != 0);
    }
    t.input.resize(static_cast<std::size_t>(count) * t.dim);
    t.output.resize(static_cast<std::size_t>(count) * t.dim);
    for (auto& x : t.input) x = r.f64();
    for (auto& x : t.output) x = r.f64();
    if (!r.at_end()) throw Error(ErrorCode::parse, path.string() + ": trailing bytes");
    return t;
}

}  // namespace stylesearch::embed
