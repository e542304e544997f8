#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stylesearch/ranked_list.hpp"
#include "stylesearch/vector.hpp"

namespace stylesearch {

class VectorIndex;
struct Room;

struct BBox {
    double x = 0.0;
    double y = 0.0;
    double width = 0.0;
    double height = 0.0;

    double area() const noexcept { return width * height; }
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
    std::string class_label;
    BBox bbox;
    double confidence = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

namespace detect {

/// Intersection over union, in [0, 1].
double iou(const BBox& a, const BBox& b);

/// Throws validation errors for empty class, non-positive extent, negative
/// origin or confidence outside [0, 1].
void validate(const Detection& det, const std::string& where);

/// Text rows `class x y w h confidence`. Multi-word classes use '_' in place
/// of spaces on disk ("wall_clock") and are restored to spaces on load.
std::vector<Detection> load_detections(const std::filesystem::path& path);
void save_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> parse_detections(const std::string& text, const std::string& source);

struct FilterConfig {
    double threshold = 0.1;
    double iou_threshold = 0.5;
    bool per_class = false;
};

/// Confidence threshold followed by greedy highest-confidence suppression.
/// Returns source indices of the kept detections in keep order
/// (confidence desc, area desc, x asc, source index asc).
std::vector<std::size_t> filter_indices(const std::vector<Detection>& dets, const FilterConfig& config);

std::vector<Detection> filter_detections(const std::vector<Detection>& dets, const FilterConfig& config);

struct RoiQuery {
    RoomId room_id;
    std::size_t source_row = 0;
    Detection detection;
    FeatureVector feature;
};

/// Pairs the kept detections of a room with their ROI features (row order of
/// the unfiltered detection file).
std::vector<RoiQuery> make_roi_queries(const RoomId& room_id, const std::vector<Detection>& dets,
                                       const std::vector<FeatureVector>& roi_features, const FilterConfig& config);

struct RoiResult {
    RoiQuery query;
    RankedList results;
    /// The detection class had no index partition; the full index was searched.
    bool class_fallback = false;
};

/// One class-restricted kNN per ROI, in the order of `queries`.
std::vector<RoiResult> room_query(const std::vector<RoiQuery>& queries, const VectorIndex& index, std::size_t k);

/// Convenience over a corpus room with ingested detections and ROI features.
std::vector<RoiResult> room_query(const Room& room, const FilterConfig& config, const VectorIndex& index, std::size_t k);

}  // namespace detect

}  // namespace stylesearch
