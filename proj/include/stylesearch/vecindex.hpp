#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stylesearch/ranked_list.hpp"
#include "stylesearch/vector.hpp"

namespace stylesearch {

struct Corpus;

/// Exact exhaustive nearest-neighbour index over L2-normalized vectors.
///
/// Entries are kept sorted by ItemId, so ranking ties (equal distance)
/// resolve to ascending id and results do not depend on insertion order.
/// Immutable after construction; concurrent queries are safe.
class VectorIndex {
public:
    VectorIndex() = default;

    /// `classes`, when given, must map every entry id to a class label and
    /// enables per-class partitions.
    static VectorIndex build(std::vector<std::pair<ItemId, FeatureVector>> entries,
                             const std::map<ItemId, std::string>* classes = nullptr);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool partitioned() const noexcept { return !classes_.empty(); }

    const std::vector<ItemId>& ids() const noexcept { return ids_; }
    std::optional<std::size_t> find(const ItemId& id) const;
    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    FeatureVector vector(std::size_t i) const;
    /// Stored (normalized) vector of `id`, if present.
    std::optional<FeatureVector> vector_of(const ItemId& id) const;

    bool has_class(const std::string& class_label) const { return partitions_.contains(class_label); }
    std::vector<std::string> classes() const;
    const std::string& class_of(std::size_t i) const { return classes_.at(i); }
    std::span<const std::size_t> partition(const std::string& class_label) const;

    /// k nearest by Euclidean distance between normalized vectors, ascending.
    /// Throws on dimension mismatch, k == 0, or an unknown class filter.
    RankedList knn(const FeatureVector& query, std::size_t k,
                   const std::optional<std::string>& class_filter = std::nullopt) const;

    /// k most cosine-similar entries, descending similarity.
    RankedList knn_cosine(const FeatureVector& query, std::size_t k) const;

    /// SSIX binary file: "SSIX", u32 version, u32 dim, u32 count, u32 flags,
    /// id table (u32 len + id, u32 len + class per entry), count*dim float32.
    void save(const std::filesystem::path& path) const;
    std::string serialize() const;
    static VectorIndex load(const std::filesystem::path& path);

    friend bool operator==(const VectorIndex& a, const VectorIndex& b) {
        return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.classes_ == b.classes_ && a.data_ == b.data_;
    }

private:
    template <class Score, class Better>
    RankedList top_k(std::span<const std::size_t> candidates, std::size_t k, Score score, Better better,
                     Modality modality) const;

    std::size_t dim_ = 0;
    std::vector<ItemId> ids_;
    std::vector<std::string> classes_;
    std::vector<float> data_;
    std::vector<std::size_t> all_;
    std::map<std::string, std::vector<std::size_t>> partitions_;
};

/// Index over the corpus visual features of `items`; class partitions come
/// from the corpus item class labels when `partition_by_class` is set.
VectorIndex build_index(std::vector<std::pair<ItemId, FeatureVector>> items, bool partition_by_class,
                        const Corpus& corpus);

/// Index over every corpus item carrying a visual feature.
VectorIndex build_index(const Corpus& corpus, bool partition_by_class);

}  // namespace stylesearch
