#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stylesearch/detect.hpp"
#include "stylesearch/vector.hpp"

namespace stylesearch {

using Tokens = std::vector<std::string>;

/// Lowercase, split on whitespace and punctuation ('-' and '_' kept inside tokens).
Tokens tokenize(std::string_view text);

struct Item {
    ItemId id;
    std::string class_label;
    std::string name;
    Tokens description;
    std::optional<std::string> image_ref;
    std::optional<FeatureVector> visual_feature;
    std::optional<FeatureVector> style_embedding;

    friend bool operator==(const Item&, const Item&) = default;
};

struct Room {
    RoomId id;
    std::string category;
    Tokens description;
    std::optional<std::string> image_ref;
    std::set<ItemId> ground_truth;
    std::optional<std::vector<Detection>> detections;
    /// One per detection row, unfiltered order.
    std::vector<FeatureVector> roi_features;
    /// Whole-image feature, when ingested.
    std::optional<FeatureVector> image_feature;

    friend bool operator==(const Room&, const Room&) = default;
};

struct Corpus {
    std::map<ItemId, Item> items;
    std::map<RoomId, Room> rooms;
    std::map<std::string, std::string> meta;

    const Item& item(const ItemId& id) const;
    const Room& room(const RoomId& id) const;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Referential integrity, non-empty labels and uniform vector dimensions.
void validate(const Corpus& corpus);

/// Reads `<root>/corpus.json` plus every referenced feature, detection and
/// ROI file, then validates.
Corpus load_corpus(const std::filesystem::path& root);

/// Writes corpus.json and companion files under root. Deterministic bytes.
void save_corpus(const Corpus& corpus, const std::filesystem::path& root);

/// Symmetric room co-occurrence counts over ground-truth sets. C(f, f) is
/// the number of rooms containing f.
class CooccurrenceMatrix {
public:
    CooccurrenceMatrix() = default;
    explicit CooccurrenceMatrix(std::vector<ItemId> ids);

    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<ItemId>& ids() const noexcept { return ids_; }
    std::optional<std::size_t> index_of(const ItemId& id) const;

    std::uint32_t at(std::size_t i, std::size_t j) const { return counts_[i * ids_.size() + j]; }
    std::uint32_t count(const ItemId& a, const ItemId& b) const;

    /// Max over distinct pairs; 0 when nothing co-occurs.
    std::uint32_t max_pair_count() const noexcept { return max_pair_; }

    void add_room(const std::set<ItemId>& members);

private:
    std::vector<ItemId> ids_;
    std::map<ItemId, std::size_t> index_;
    std::vector<std::uint32_t> counts_;
    std::uint32_t max_pair_ = 0;
};

CooccurrenceMatrix build_cooccurrence(const Corpus& corpus);

struct SynthSpec {
    std::size_t clusters = 2;
    std::size_t items_per_cluster = 5;
    std::size_t rooms_per_cluster = 10;
    /// 0 means every item of the cluster appears in each room.
    std::size_t items_per_room = 0;
    std::size_t feature_dim = 64;
    /// Per-item spread around the cluster centre.
    double noise = 0.3;
    /// Weight of the class-shared component of visual features.
    double class_weight = 0.5;
    /// Spread of ROI features around the item feature.
    double roi_noise = 0.05;
    /// Clutter added to whole-image features.
    double clutter = 0.5;
    /// Adds below-threshold and overlapping duplicate detections.
    bool spurious_detections = true;
    std::size_t descriptor_dim = 16;
    std::size_t descriptors_per_image = 24;
    std::vector<std::string> classes = {"chair", "table", "sofa", "bed", "wall clock", "pottedplant"};
    std::vector<std::string> categories = {"kitchen", "living room", "bedroom", "children room", "office"};

    friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

SynthSpec synth_spec_from_json(const std::string& json_text);
std::string synth_spec_to_json(const SynthSpec& spec);

/// Style tokens assigned to each synthetic cluster (cluster c owns tokens
/// c*3 .. c*3+2, cycling through the lexicon).
std::vector<std::string> cluster_style_tokens(std::size_t cluster);

struct SynthResult {
    Corpus corpus;
    /// Local descriptors for BoVW keyed by image_ref: items, rooms, and
    /// roi_image_ref(room image, row) for each detection row.
    std::map<std::string, std::vector<FeatureVector>> descriptors;
    /// Source item of every detection row (nullopt for spurious rows).
    std::map<RoomId, std::vector<std::optional<ItemId>>> detection_sources;
    /// Cluster index of every item.
    std::map<ItemId, std::size_t> item_cluster;
};

/// Deterministic corpus: same-cluster items co-occur in rooms and share
/// nearby visual features; rooms never mix clusters.
SynthResult synth(const SynthSpec& spec, std::uint64_t seed);

inline Corpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) { return synth(spec, seed).corpus; }

std::string roi_image_ref(const std::string& room_image_ref, std::size_t row);

/// Builtin 200-token lexicon used by synthetic descriptions.
const std::vector<std::string>& lexicon();

}  // namespace stylesearch
