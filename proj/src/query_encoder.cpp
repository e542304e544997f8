#include "stylesearch/query_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "stylesearch/error.hpp"
#include "stylesearch/simd/kernels.hpp"
#include "stylesearch/style_embed.hpp"

namespace stylesearch::text {

// ---------------------------------------------------------------------------
// Word vectors

const FeatureVector* WordVectors::find(const std::string& token) const {
    auto it = vectors.find(token);
    return it == vectors.end() ? nullptr : &it->second;
}

WordVectors WordVectors::parse(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header)) throw Error(ErrorCode::parse, source + ": empty word vector file");
    std::istringstream hs(header);
    std::size_t count = 0;
    WordVectors w;
    if (!(hs >> count >> w.dim) || w.dim == 0) throw Error(ErrorCode::parse, source + ": header must be `count dim`");
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        std::vector<float> v;
        v.reserve(w.dim);
        std::string num;
        while (ls >> num) {
            char* end = nullptr;
            v.push_back(std::strtof(num.c_str(), &end));
            if (end == num.c_str() || *end != '\0') {
                throw Error(ErrorCode::parse, source + ":" + std::to_string(line_no) + ": bad number '" + num + "'");
            }
        }
        if (v.size() != w.dim) {
            throw Error(ErrorCode::dimension_mismatch, source + ":" + std::to_string(line_no) + ": token '" + token +
                                                           "' has " + std::to_string(v.size()) + " values, expected " +
                                                           std::to_string(w.dim));
        }
        std::string lower = token;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        w.vectors.insert_or_assign(lower, FeatureVector(std::move(v)));
    }
    if (w.vectors.size() != count) {
        throw Error(ErrorCode::parse, source + ": header declares " + std::to_string(count) + " tokens, found " +
                                          std::to_string(w.vectors.size()));
    }
    return w;
}

WordVectors WordVectors::load(const std::filesystem::path& path) {
    return parse(binio::read_file(path), path.string());
}

std::string WordVectors::to_text() const {
    std::ostringstream ss;
    ss << std::setprecision(std::numeric_limits<float>::max_digits10);
    ss << vectors.size() << ' ' << dim << '\n';
    for (const auto& [token, v] : vectors) {
        ss << token;
        for (float x : v.values()) ss << ' ' << x;
        ss << '\n';
    }
    return ss.str();
}

void WordVectors::save(const std::filesystem::path& path) const { binio::write_file(path, to_text()); }

WordVectors random_word_vectors(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed) {
    WordVectors w;
    w.dim = dim;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (const auto& t : tokens) {
        std::vector<float> v(dim);
        for (auto& x : v) x = static_cast<float>(scale * normal(rng));
        w.vectors.insert_or_assign(t, FeatureVector(std::move(v)));
    }
    return w;
}

// ---------------------------------------------------------------------------
// Model layout

std::string_view variant_name(Variant v) { return v == Variant::recurrent ? "recurrent" : "mean_affine"; }

Variant parse_variant(std::string_view name) {
    if (name == "mean_affine") return Variant::mean_affine;
    if (name == "recurrent") return Variant::recurrent;
    throw Error(ErrorCode::invalid_argument, "unknown encoder variant '" + std::string(name) + "'");
}

namespace {

// Offsets of each parameter block inside EncoderModel::params.
struct Layout {
    std::size_t d, h, n;
    // mean_affine
    std::size_t W = 0, b = 0;
    // recurrent
    std::size_t Wz = 0, Wr = 0, Wn = 0, Uz = 0, Ur = 0, Un = 0, bz = 0, br = 0, bn = 0, Wo = 0, bo = 0;
    std::size_t total = 0;

    Layout(Variant v, std::size_t in, std::size_t out, std::size_t hid) : d(in), h(hid), n(out) {
        if (v == Variant::mean_affine) {
            W = 0;
            b = n * d;
            total = b + n;
            return;
        }
        Wz = 0;
        Wr = Wz + h * d;
        Wn = Wr + h * d;
        Uz = Wn + h * d;
        Ur = Uz + h * h;
        Un = Ur + h * h;
        bz = Un + h * h;
        br = bz + h;
        bn = br + h;
        Wo = bn + h;
        bo = Wo + n * h;
        total = bo + n;
    }
};

Layout layout_of(const EncoderModel& m) { return Layout(m.variant, m.in_dim, m.out_dim, m.hidden); }

// out += M x, M row-major rows x cols at p
void matvec_add(const double* M, std::size_t rows, std::size_t cols, std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] += simd::dot(std::span<const double>(M + r * cols, cols), x);
    }
}

// out += M^T g
void matvec_t_add(const double* M, std::size_t rows, std::size_t cols, std::span<const double> g, std::span<double> out) {
    for (std::size_t r = 0; r < rows; ++r) simd::axpy(g[r], std::span<const double>(M + r * cols, cols), out);
}

// dM += g x^T
void outer_add(double* dM, std::size_t rows, std::size_t cols, std::span<const double> g, std::span<const double> x) {
    for (std::size_t r = 0; r < rows; ++r) simd::axpy(g[r], x, std::span<double>(dM + r * cols, cols));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct GruStep {
    std::vector<double> h_prev, z, r, rh, nn, h;
};

std::vector<double> mean_of(const std::vector<std::vector<double>>& inputs, std::size_t d) {
    std::vector<double> m(d, 0.0);
    for (const auto& x : inputs) simd::axpy(1.0, x, m);
    const double inv = 1.0 / static_cast<double>(inputs.size());
    for (auto& v : m) v *= inv;
    return m;
}

std::vector<GruStep> gru_forward(const EncoderModel& m, const Layout& L, const std::vector<std::vector<double>>& inputs) {
    const double* p = m.params.data();
    std::vector<GruStep> steps;
    std::vector<double> h(L.h, 0.0);
    for (const auto& x : inputs) {
        GruStep s;
        s.h_prev = h;
        s.z.assign(p + L.bz, p + L.bz + L.h);
        s.r.assign(p + L.br, p + L.br + L.h);
        matvec_add(p + L.Wz, L.h, L.d, x, s.z);
        matvec_add(p + L.Uz, L.h, L.h, h, s.z);
        matvec_add(p + L.Wr, L.h, L.d, x, s.r);
        matvec_add(p + L.Ur, L.h, L.h, h, s.r);
        for (auto& v : s.z) v = sigmoid(v);
        for (auto& v : s.r) v = sigmoid(v);
        s.rh.resize(L.h);
        for (std::size_t i = 0; i < L.h; ++i) s.rh[i] = s.r[i] * h[i];
        s.nn.assign(p + L.bn, p + L.bn + L.h);
        matvec_add(p + L.Wn, L.h, L.d, x, s.nn);
        matvec_add(p + L.Un, L.h, L.h, s.rh, s.nn);
        for (auto& v : s.nn) v = std::tanh(v);
        s.h.resize(L.h);
        for (std::size_t i = 0; i < L.h; ++i) s.h[i] = (1.0 - s.z[i]) * s.nn[i] + s.z[i] * h[i];
        h = s.h;
        steps.push_back(std::move(s));
    }
    return steps;
}

}  // namespace

std::size_t EncoderModel::param_count(Variant variant, std::size_t in_dim, std::size_t out_dim, std::size_t hidden) {
    return Layout(variant, in_dim, out_dim, hidden).total;
}

EncoderModel EncoderModel::init(Variant variant, std::size_t in_dim, std::size_t out_dim, std::size_t hidden,
                                std::uint64_t seed, OovPolicy oov) {
    if (in_dim == 0 || out_dim == 0) throw Error(ErrorCode::invalid_argument, "encoder dimensions must be positive");
    if (variant == Variant::recurrent && hidden == 0) throw Error(ErrorCode::invalid_argument, "recurrent encoder needs hidden > 0");
    EncoderModel m;
    m.variant = variant;
    m.oov_policy = oov;
    m.in_dim = in_dim;
    m.out_dim = out_dim;
    m.hidden = variant == Variant::recurrent ? hidden : 0;
    const Layout L = layout_of(m);
    m.params.assign(L.total, 0.0);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t off, std::size_t rows, std::size_t cols) {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (std::size_t i = 0; i < rows * cols; ++i) m.params[off + i] = u(rng);
    };
    if (variant == Variant::mean_affine) {
        fill(L.W, L.n, L.d);
    } else {
        fill(L.Wz, L.h, L.d);
        fill(L.Wr, L.h, L.d);
        fill(L.Wn, L.h, L.d);
        fill(L.Uz, L.h, L.h);
        fill(L.Ur, L.h, L.h);
        fill(L.Un, L.h, L.h);
        fill(L.Wo, L.n, L.h);
    }
    return m;
}

EncoderModel EncoderModel::identity(std::size_t dim) {
    EncoderModel m;
    m.variant = Variant::mean_affine;
    m.in_dim = dim;
    m.out_dim = dim;
    m.params.assign(dim * dim + dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) m.params[i * dim + i] = 1.0;
    return m;
}

OovReport oov_report(const WordVectors& words, const Tokens& query) {
    OovReport r;
    for (const auto& t : query) {
        r.tokens.push_back(t);
        r.in_vocabulary.push_back(words.find(t) != nullptr);
    }
    return r;
}

std::vector<std::vector<double>> lookup(const EncoderModel& model, const WordVectors& words, const Tokens& query) {
    if (query.empty()) throw Error(ErrorCode::invalid_argument, "empty query");
    if (words.dim != model.in_dim) {
        throw Error(ErrorCode::dimension_mismatch, "word vectors have dimension " + std::to_string(words.dim) +
                                                       ", encoder expects " + std::to_string(model.in_dim));
    }
    std::vector<std::vector<double>> out;
    bool any = false;
    for (const auto& t : query) {
        if (const FeatureVector* v = words.find(t)) {
            out.emplace_back(v->values().begin(), v->values().end());
            any = true;
        } else if (model.oov_policy == OovPolicy::zero) {
            out.emplace_back(model.in_dim, 0.0);
        }
    }
    if (!any) {
        std::string list;
        for (const auto& t : query) list += (list.empty() ? "" : ", ") + t;
        throw Error(ErrorCode::all_oov, "no query token is in the word-vector vocabulary: " + list);
    }
    return out;
}

std::vector<double> forward(const EncoderModel& model, const std::vector<std::vector<double>>& inputs) {
    const Layout L = layout_of(model);
    const double* p = model.params.data();
    std::vector<double> y;
    if (model.variant == Variant::mean_affine) {
        const auto xm = mean_of(inputs, L.d);
        y.assign(p + L.b, p + L.b + L.n);
        matvec_add(p + L.W, L.n, L.d, xm, y);
        return y;
    }
    const auto steps = gru_forward(model, L, inputs);
    y.assign(p + L.bo, p + L.bo + L.n);
    matvec_add(p + L.Wo, L.n, L.h, steps.back().h, y);
    return y;
}

double loss_and_gradient(const EncoderModel& model, const std::vector<std::vector<double>>& inputs,
                         std::span<const double> target, std::span<double> grad) {
    const Layout L = layout_of(model);
    const double* p = model.params.data();
    double* g = grad.data();

    if (model.variant == Variant::mean_affine) {
        const auto xm = mean_of(inputs, L.d);
        std::vector<double> y(p + L.b, p + L.b + L.n);
        matvec_add(p + L.W, L.n, L.d, xm, y);
        double loss = 0.0;
        std::vector<double> dy(L.n);
        for (std::size_t i = 0; i < L.n; ++i) {
            const double e = y[i] - target[i];
            loss += e * e;
            dy[i] = 2.0 * e;
        }
        outer_add(g + L.W, L.n, L.d, dy, xm);
        simd::axpy(1.0, dy, grad.subspan(L.b, L.n));
        return loss;
    }

    const auto steps = gru_forward(model, L, inputs);
    std::vector<double> y(p + L.bo, p + L.bo + L.n);
    matvec_add(p + L.Wo, L.n, L.h, steps.back().h, y);
    double loss = 0.0;
    std::vector<double> dy(L.n);
    for (std::size_t i = 0; i < L.n; ++i) {
        const double e = y[i] - target[i];
        loss += e * e;
        dy[i] = 2.0 * e;
    }
    outer_add(g + L.Wo, L.n, L.h, dy, steps.back().h);
    simd::axpy(1.0, dy, grad.subspan(L.bo, L.n));
    std::vector<double> dh(L.h, 0.0);
    matvec_t_add(p + L.Wo, L.n, L.h, dy, dh);

    std::vector<double> dz(L.h), dan(L.h), dar(L.h), daz(L.h), drh(L.h), dh_prev(L.h);
    for (std::size_t t = steps.size(); t-- > 0;) {
        const auto& s = steps[t];
        const auto& x = inputs[t];
        for (std::size_t i = 0; i < L.h; ++i) {
            dz[i] = dh[i] * (s.h_prev[i] - s.nn[i]);
            dan[i] = dh[i] * (1.0 - s.z[i]) * (1.0 - s.nn[i] * s.nn[i]);
            dh_prev[i] = dh[i] * s.z[i];
        }
        outer_add(g + L.Wn, L.h, L.d, dan, x);
        outer_add(g + L.Un, L.h, L.h, dan, s.rh);
        simd::axpy(1.0, dan, grad.subspan(L.bn, L.h));
        std::fill(drh.begin(), drh.end(), 0.0);
        matvec_t_add(p + L.Un, L.h, L.h, dan, drh);
        for (std::size_t i = 0; i < L.h; ++i) {
            dar[i] = drh[i] * s.h_prev[i] * s.r[i] * (1.0 - s.r[i]);
            dh_prev[i] += drh[i] * s.r[i];
            daz[i] = dz[i] * s.z[i] * (1.0 - s.z[i]);
        }
        outer_add(g + L.Wr, L.h, L.d, dar, x);
        outer_add(g + L.Ur, L.h, L.h, dar, s.h_prev);
        simd::axpy(1.0, dar, grad.subspan(L.br, L.h));
        matvec_t_add(p + L.Ur, L.h, L.h, dar, dh_prev);
        outer_add(g + L.Wz, L.h, L.d, daz, x);
        outer_add(g + L.Uz, L.h, L.h, daz, s.h_prev);
        simd::axpy(1.0, daz, grad.subspan(L.bz, L.h));
        matvec_t_add(p + L.Uz, L.h, L.h, daz, dh_prev);
        dh = dh_prev;
    }
    return loss;
}

FeatureVector encode(const EncoderModel& model, const WordVectors& words, const Tokens& query) {
    const auto y = forward(model, lookup(model, words, query));
    std::vector<float> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i])) throw Error(ErrorCode::degenerate, "encoder produced a non-finite output");
        out[i] = static_cast<float>(y[i]);
    }
    return FeatureVector(std::move(out));
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Sample {
    std::vector<std::vector<double>> inputs;
    std::vector<double> target;
};

std::vector<Sample> training_set(const EncoderModel& model, const Corpus& corpus, const embed::EmbeddingTable& table,
                                 const WordVectors& words) {
    std::vector<Sample> out;
    for (const auto& [id, item] : corpus.items) {
        const auto row = table.index_of(id);
        if (!row) continue;
        bool any = false;
        for (const auto& t : item.description) any = any || words.find(t) != nullptr;
        if (!any) continue;
        Sample s;
        s.inputs = lookup(model, words, item.description);
        const auto r = table.input_row(*row);
        s.target.assign(r.begin(), r.end());
        out.push_back(std::move(s));
    }
    return out;
}

double mse_over(const EncoderModel& model, const std::vector<Sample>& samples) {
    double total = 0.0;
    for (const auto& s : samples) {
        const auto y = forward(model, s.inputs);
        for (std::size_t i = 0; i < y.size(); ++i) total += (y[i] - s.target[i]) * (y[i] - s.target[i]);
    }
    return total / static_cast<double>(samples.size());
}

}  // namespace

double training_mse(const EncoderModel& model, const Corpus& corpus, const embed::EmbeddingTable& table,
                    const WordVectors& words) {
    const auto samples = training_set(model, corpus, table, words);
    if (samples.empty()) throw Error(ErrorCode::invalid_argument, "no trainable items for the encoder");
    return mse_over(model, samples);
}

EncoderTraining train_encoder(const Corpus& corpus, const embed::EmbeddingTable& table, const WordVectors& words,
                              const EncoderConfig& config) {
    EncoderTraining out;
    out.model = EncoderModel::init(config.variant, words.dim, table.dim, config.hidden, config.seed, config.oov_policy);
    const auto samples = training_set(out.model, corpus, table, words);
    if (samples.empty()) {
        throw Error(ErrorCode::invalid_argument,
                    "no trainable items: need items with a style embedding and an in-vocabulary description token");
    }
    if (config.batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be positive");
    out.samples = samples.size();
    out.initial_mse = mse_over(out.model, samples);

    auto& params = out.model.params;
    const std::size_t P = params.size();
    std::vector<double> m1(P, 0.0), m2(P, 0.0), grad(P);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::mt19937_64 rng(config.seed ^ 0xd1b54a32d192ed03ULL);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = samples[order[i]];
                loss_and_gradient(out.model, s.inputs, s.target, grad);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            ++t;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
            for (std::size_t j = 0; j < P; ++j) {
                const double gj = grad[j] * scale;
                m1[j] = beta1 * m1[j] + (1.0 - beta1) * gj;
                m2[j] = beta2 * m2[j] + (1.0 - beta2) * gj * gj;
                params[j] -= config.learning_rate * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + eps);
            }
        }
        const double mse = mse_over(out.model, samples);
        if (!std::isfinite(mse)) throw Error(ErrorCode::degenerate, "encoder MSE diverged at epoch " + std::to_string(epoch));
        out.mse_history.push_back(mse);
    }
    out.final_mse = out.mse_history.empty() ? out.initial_mse : out.mse_history.back();
    return out;
}

VectorIndex build_style_index(const embed::EmbeddingTable& table) { return VectorIndex::build(table.embeddings()); }

RankedList text_search(const EncoderModel& model, const WordVectors& words, const VectorIndex& style_index,
                       const Tokens& query, std::size_t k) {
    return style_index.knn_cosine(encode(model, words, query), k);
}

// ---------------------------------------------------------------------------
// Persistence

std::string EncoderModel::serialize() const {
    std::string out = "SSEN";
    binio::put_u32(out, 1);
    binio::put_u32(out, static_cast<std::uint32_t>(variant));
    binio::put_u32(out, static_cast<std::uint32_t>(oov_policy));
    binio::put_u32(out, static_cast<std::uint32_t>(in_dim));
    binio::put_u32(out, static_cast<std::uint32_t>(out_dim));
    binio::put_u32(out, static_cast<std::uint32_t>(hidden));
    binio::put_u64(out, params.size());
    for (double p : params) binio::put_f64(out, p);
    return out;
}

void EncoderModel::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

EncoderModel EncoderModel::load(const std::filesystem::path& path) {
    binio::Reader r(binio::read_file(path), path.string());
    if (r.bytes(4) != "SSEN") throw Error(ErrorCode::parse, path.string() + ": not an encoder model");
    if (r.u32() != 1) throw Error(ErrorCode::parse, path.string() + ": unsupported encoder version");
    EncoderModel m;
    const std::uint32_t variant = r.u32();
    const std::uint32_t oov = r.u32();
    if (variant > 1 || oov > 1) throw Error(ErrorCode::parse, path.string() + ": bad variant or OOV tag");
    m.variant = static_cast<Variant>(variant);
    m.oov_policy = static_cast<OovPolicy>(oov);
    m.in_dim = r.u32();
    m.out_dim = r.u32();
    m.hidden = r.u32();
    const std::uint64_t count = r.u64();
    if (count != param_count(m.variant, m.in_dim, m.out_dim, m.hidden)) {
        throw Error(ErrorCode::parse, path.string() + ": parameter count does not match layout");
    }
    m.params.resize(count);
    for (auto& p : m.params) p = r.f64();
    if (!r.at_end()) throw Error(ErrorCode::parse, path.string() + ": trailing bytes");
    return m;
}

}  // namespace stylesearch::text
