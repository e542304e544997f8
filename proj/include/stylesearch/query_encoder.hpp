#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stylesearch/corpus.hpp"
#include "stylesearch/ranked_list.hpp"
#include "stylesearch/vecindex.hpp"
#include "stylesearch/vector.hpp"

namespace stylesearch::embed {
struct EmbeddingTable;
}

namespace stylesearch::text {

/// Pretrained word vectors. Read-only for the encoder (never updated).
struct WordVectors {
    std::size_t dim = 0;
    std::map<std::string, FeatureVector> vectors;

    const FeatureVector* find(const std::string& token) const;

    /// Text format: first line `count dim`, then `token v1 ... vdim`.
    static WordVectors load(const std::filesystem::path& path);
    static WordVectors parse(const std::string& text, const std::string& source);
    std::string to_text() const;
    void save(const std::filesystem::path& path) const;

    friend bool operator==(const WordVectors&, const WordVectors&) = default;
};

/// Seeded Gaussian vectors for `tokens`; stands in for pretrained vectors
/// on synthetic corpora.
WordVectors random_word_vectors(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed);

enum class Variant : std::uint32_t { mean_affine = 0, recurrent = 1 };
enum class OovPolicy : std::uint32_t { skip = 0, zero = 1 };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

/// Regression model from a token sequence to the style-embedding space.
///
/// mean_affine: y = W * mean(x_t) + b
/// recurrent:   single GRU layer over x_1..x_T (h_0 = 0), y = W_o * h_T + b_o
///   z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r)
///   n = tanh(W_n x + U_n (r*h) + b_n), h' = (1 - z) * n + z * h
struct EncoderModel {
    Variant variant = Variant::mean_affine;
    OovPolicy oov_policy = OovPolicy::skip;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t hidden = 0;
    std::vector<double> params;

    static std::size_t param_count(Variant variant, std::size_t in_dim, std::size_t out_dim, std::size_t hidden);

    /// Seeded initialization (Xavier-uniform weights, zero biases).
    static EncoderModel init(Variant variant, std::size_t in_dim, std::size_t out_dim, std::size_t hidden,
                             std::uint64_t seed, OovPolicy oov = OovPolicy::skip);
    /// mean_affine with W = I, b = 0.
    static EncoderModel identity(std::size_t dim);

    std::string serialize() const;
    void save(const std::filesystem::path& path) const;
    static EncoderModel load(const std::filesystem::path& path);

    friend bool operator==(const EncoderModel&, const EncoderModel&) = default;
};

struct OovReport {
    std::vector<std::string> tokens;
    std::vector<bool> in_vocabulary;
};

/// Word vectors for the query under the model's OOV policy. Throws
/// ErrorCode::all_oov (or invalid_argument for an empty query).
std::vector<std::vector<double>> lookup(const EncoderModel& model, const WordVectors& words, const Tokens& query);

OovReport oov_report(const WordVectors& words, const Tokens& query);

std::vector<double> forward(const EncoderModel& model, const std::vector<std::vector<double>>& inputs);

/// ||forward(inputs) - target||^2 and its gradient with respect to params
/// (accumulated into `grad`, which must have params.size() entries).
double loss_and_gradient(const EncoderModel& model, const std::vector<std::vector<double>>& inputs,
                         std::span<const double> target, std::span<double> grad);

FeatureVector encode(const EncoderModel& model, const WordVectors& words, const Tokens& query);

struct EncoderConfig {
    Variant variant = Variant::mean_affine;
    OovPolicy oov_policy = OovPolicy::skip;
    std::size_t hidden = 32;
    std::size_t epochs = 300;
    double learning_rate = 0.01;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
};

struct EncoderTraining {
    EncoderModel model;
    double initial_mse = 0.0;
    double final_mse = 0.0;
    /// Training-set MSE after each epoch.
    std::vector<double> mse_history;
    std::size_t samples = 0;
};

/// Mini-batch Adam on mean ||m(description) - embedding||^2 over items
/// that have an embedding and at least one in-vocabulary description token.
EncoderTraining train_encoder(const Corpus& corpus, const embed::EmbeddingTable& table, const WordVectors& words,
                              const EncoderConfig& config);

/// Mean squared error of `model` over the same training set.
double training_mse(const EncoderModel& model, const Corpus& corpus, const embed::EmbeddingTable& table,
                    const WordVectors& words);

/// Index over the table's style embeddings for cosine search.
VectorIndex build_style_index(const embed::EmbeddingTable& table);

/// Top-k items by cosine similarity between encode(query) and style embeddings.
RankedList text_search(const EncoderModel& model, const WordVectors& words, const VectorIndex& style_index,
                       const Tokens& query, std::size_t k);

}  // namespace stylesearch::text
