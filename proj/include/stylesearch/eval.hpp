#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stylesearch/bovw.hpp"
#include "stylesearch/corpus.hpp"
#include "stylesearch/detect.hpp"
#include "stylesearch/query_encoder.hpp"
#include "stylesearch/ranked_list.hpp"
#include "stylesearch/style_embed.hpp"
#include "stylesearch/vecindex.hpp"

namespace stylesearch::eval {

using GroundTruth = std::map<RoomId, std::set<ItemId>>;
using RoomResults = std::map<RoomId, RankedList>;

GroundTruth ground_truth(const Corpus& corpus);

/// Fraction of rooms with at least one ground-truth item at rank <= k
/// (rank 1 is the first entry). Every room in `results` needs non-empty
/// ground truth.
double hit_at_k(const RoomResults& results, const GroundTruth& gt, std::size_t k);

/// (k, Hit@k) for k = 1..k_max.
std::vector<std::pair<std::size_t, double>> recall_curve(const RoomResults& results, const GroundTruth& gt,
                                                         std::size_t k_max);

/// C(f1, f2) / max over distinct pairs of C. Requires f1 != f2 and a matrix
/// with at least one co-occurring pair.
double style_similarity(const CooccurrenceMatrix& c, const ItemId& f1, const ItemId& f2);

struct QueryResult {
    ItemId query_item;
    RankedList results;
};

/// Mean of s(query_item, r) over every returned r != query_item, pooled over
/// all queries. 0 when nothing is returned.
double mean_similarity(const std::vector<QueryResult>& results, const CooccurrenceMatrix& c);

/// Merges per-ROI lists rank by rank (ROI order within a rank), dropping
/// repeated items: position in the merged list is the room-level rank.
RankedList merge_roi_lists(const std::vector<RankedList>& lists, std::size_t limit);

struct ExperimentConfig {
    std::vector<std::size_t> k_values = {1, 3, 6, 10};
    std::size_t hit_k = 6;
    std::size_t k_max = 20;
    std::size_t blend_k = 6;
    detect::FilterConfig detection;
    bool class_name_query = true;
    std::vector<std::string> text_queries;
    bool bovw = false;
    /// Free-form identifiers folded into the fingerprint (seeds, paths).
    std::map<std::string, std::string> labels;

    static ExperimentConfig from_json(const std::string& text);
    std::string to_json() const;
};

/// Loaded artifacts the experiment runs against. Pointers may be null when
/// the corresponding part of the report is not wanted.
struct ExperimentInputs {
    const Corpus* corpus = nullptr;
    const VectorIndex* visual_index = nullptr;
    const embed::EmbeddingTable* embeddings = nullptr;
    const text::EncoderModel* encoder = nullptr;
    const text::WordVectors* words = nullptr;
    const bovw::Codebook* codebook = nullptr;
    /// Descriptor sets keyed by image_ref (needed with a codebook).
    const std::map<std::string, bovw::DescriptorSet>* descriptors = nullptr;
};

struct VisualRow {
    std::string model;
    std::string setting;  // "whole_image" or "with_detection"
    std::map<std::size_t, double> hit_at_k;
    std::vector<std::pair<std::size_t, double>> recall_curve;
    std::map<RoomId, std::vector<ItemId>> room_results;
    std::size_t class_fallbacks = 0;
};

struct BlendRow {
    std::string query;
    std::optional<double> visual;
    std::optional<double> text;
    std::optional<double> simple;
    std::optional<double> feature;
};

struct EvalReport {
    std::size_t hit_k = 6;
    std::vector<VisualRow> visual;
    std::vector<BlendRow> blending;
    std::optional<BlendRow> average;
    std::size_t evaluated_rooms = 0;
    std::size_t excluded_rooms = 0;
    std::map<std::string, std::string> fingerprint;

    /// Hit@hit_k of the named row, if present.
    std::optional<double> hit(const std::string& model, const std::string& setting) const;

    std::string to_json() const;
    /// Aligned text tables in the layout of the classic result tables.
    std::string to_table() const;
    /// model,setting,k,recall rows.
    std::string curves_csv() const;
};

EvalReport run_experiment(const ExperimentInputs& inputs, const ExperimentConfig& config);

}  // namespace stylesearch::eval
