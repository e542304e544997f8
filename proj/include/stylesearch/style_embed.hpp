#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stylesearch/vector.hpp"

namespace stylesearch {
struct Corpus;
}

namespace stylesearch::embed {

/// One CBOW example: predict `target` from the other items of a room.
struct TrainingPair {
    ItemId target;
    std::vector<ItemId> context;

    friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

/// One pair per (room, member) for rooms with at least two members, in room
/// then member id order. Duplicate rooms yield duplicate pairs.
std::vector<TrainingPair> make_pairs(const Corpus& corpus);

struct CbowConfig {
    std::size_t dim = 32;
    std::size_t epochs = 200;
    double learning_rate = 0.05;
    std::size_t negatives = 5;
    std::uint64_t seed = 0;

    friend bool operator==(const CbowConfig&, const CbowConfig&) = default;
};

/// Item vectors learned from room co-occurrence. Parameters are row-major
/// (vocab.size() x dim) in double precision.
struct EmbeddingTable {
    std::size_t dim = 0;
    std::vector<ItemId> vocab;  // sorted
    std::vector<double> input;
    std::vector<double> output;
    /// False for items that never appeared in a multi-item room.
    std::vector<bool> trained;
    CbowConfig config;
    /// Mean pair loss per epoch. Not persisted.
    std::vector<double> epoch_loss;

    std::optional<std::size_t> index_of(const ItemId& id) const;
    std::span<const double> input_row(std::size_t i) const { return {input.data() + i * dim, dim}; }
    std::span<double> input_row(std::size_t i) { return {input.data() + i * dim, dim}; }
    std::span<const double> output_row(std::size_t i) const { return {output.data() + i * dim, dim}; }
    std::span<double> output_row(std::size_t i) { return {output.data() + i * dim, dim}; }

    /// Input vector of `id` as float32 (the item's style embedding).
    FeatureVector embedding(const ItemId& id) const;
    std::vector<std::pair<ItemId, FeatureVector>> embeddings() const;

    /// "SSEM" container: config, id table, trained flags, float64 input and
    /// output blocks.
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;
    static EmbeddingTable load(const std::filesystem::path& path);

    bool same_parameters(const EmbeddingTable& other) const {
        return dim == other.dim && vocab == other.vocab && input == other.input && output == other.output &&
               trained == other.trained && config == other.config;
    }
};

/// Seeded initialization: inputs uniform in [-0.5/dim, 0.5/dim], outputs 0.
EmbeddingTable init_table(std::vector<ItemId> vocab, const CbowConfig& config);

/// Loss of one example and its gradient with respect to the touched rows.
struct PairGradient {
    double loss = 0.0;
    /// d loss / d h where h is the mean context input vector.
    std::vector<double> d_hidden;
    /// (vocab row, d loss / d output row); target first, then negatives.
    std::vector<std::pair<std::size_t, std::vector<double>>> d_outputs;
};

/// Negative-sampling CBOW objective for one example:
///   h = mean(input[c] for c in context)
///   loss = -log sigmoid(output[target] . h) - sum_n log sigmoid(-output[n] . h)
/// d loss / d input[c] = d_hidden / |context|.
PairGradient pair_gradient(const EmbeddingTable& table, std::span<const std::size_t> context, std::size_t target,
                           std::span<const std::size_t> negatives);

/// SGD over shuffled pairs with linearly decaying learning rate and
/// unigram^0.75 negative sampling. Vocabulary is `vocab` (sorted internally).
EmbeddingTable train_cbow(const std::vector<TrainingPair>& pairs, std::vector<ItemId> vocab, const CbowConfig& config);

struct ClusterQuality {
    double intra = 0.0;  // mean pairwise cosine distance within a label
    double inter = 0.0;  // mean pairwise cosine distance across labels
};

ClusterQuality cluster_quality(const EmbeddingTable& table, const std::map<ItemId, std::string>& labels);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace stylesearch::embed
