#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stylesearch/ranked_list.hpp"
#include "stylesearch/vecindex.hpp"
#include "stylesearch/vector.hpp"

namespace stylesearch::bovw {

struct DescriptorSet {
    std::string image_ref;
    std::vector<FeatureVector> descriptors;
};

struct Codebook {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<FeatureVector> centroids;
    std::uint64_t training_seed = 0;
    /// Inertia after every assignment step, in order. Not persisted.
    std::vector<double> inertia_history;
    std::size_t iterations = 0;

    void save(const std::filesystem::path& path) const;
    std::string serialize() const;
    static Codebook load(const std::filesystem::path& path);
};

struct TrainConfig {
    std::size_t k = 1000;
    std::uint64_t seed = 0;
    std::size_t max_iters = 100;
    double tol = 1e-6;
};

/// k-means++ seeding followed by Lloyd iterations. Stops when the largest
/// centroid shift drops below tol or after max_iters. Empty clusters are
/// reseeded to the point farthest from its assigned centroid.
Codebook train_codebook(const std::vector<DescriptorSet>& sets, const TrainConfig& config);

struct Histogram {
    /// Term counts, L2-normalized; all zero when `empty`.
    FeatureVector counts;
    bool empty = false;
};

/// Nearest-centroid assignment (lowest index wins ties), L2-normalized counts.
Histogram quantize(const DescriptorSet& set, const Codebook& codebook);

/// Sum of squared distances of every descriptor to its nearest centroid.
double inertia(const std::vector<DescriptorSet>& sets, const Codebook& codebook);

/// Index over non-empty histograms; empty ones are listed in `skipped`.
VectorIndex build_histogram_index(const std::map<std::string, Histogram>& histograms,
                                  std::vector<std::string>* skipped = nullptr);

/// kNN over histogram vectors with vecindex semantics.
RankedList search(const VectorIndex& index, const Histogram& query, std::size_t k);

/// `<root>/<image_ref>.desc` in the shared vector format.
std::filesystem::path descriptor_path(const std::filesystem::path& root, const std::string& image_ref);
DescriptorSet load_descriptors(const std::filesystem::path& root, const std::string& image_ref);

}  // namespace stylesearch::bovw
