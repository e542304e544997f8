#include "stylesearch/detect.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "stylesearch/corpus.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/vecindex.hpp"

namespace stylesearch::detect {

double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x + a.width, b.x + b.width) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.height, b.y + b.height) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

void validate(const Detection& det, const std::string& where) {
    if (det.class_label.empty()) throw Error(ErrorCode::validation, where + ": empty class label");
    const auto& b = det.bbox;
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.width) || !std::isfinite(b.height)) {
        throw Error(ErrorCode::validation, where + ": non-finite box");
    }
    if (b.x < 0.0 || b.y < 0.0) throw Error(ErrorCode::validation, where + ": negative box origin");
    if (b.width <= 0.0 || b.height <= 0.0) throw Error(ErrorCode::validation, where + ": box width and height must be positive");
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
        std::ostringstream ss;
        ss << where << ": confidence " << det.confidence << " outside [0,1]";
        throw Error(ErrorCode::validation, ss.str());
    }
}

std::vector<Detection> parse_detections(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::vector<Detection> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const std::string where = source + " row " + std::to_string(line_no);
        std::istringstream ls(line);
        Detection d;
        std::string extra;
        if (!(ls >> d.class_label >> d.bbox.x >> d.bbox.y >> d.bbox.width >> d.bbox.height >> d.confidence) ||
            (ls >> extra)) {
            throw Error(ErrorCode::parse, where + ": expected `class x y w h confidence`");
        }
        std::replace(d.class_label.begin(), d.class_label.end(), '_', ' ');
        validate(d, where);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
    return parse_detections(binio::read_file(path), path.string());
}

void save_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
    std::ostringstream ss;
    ss << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& d : dets) {
        std::string cls = d.class_label;
        std::replace(cls.begin(), cls.end(), ' ', '_');
        ss << cls << ' ' << d.bbox.x << ' ' << d.bbox.y << ' ' << d.bbox.width << ' ' << d.bbox.height << ' '
           << d.confidence << '\n';
    }
    binio::write_file(path, ss.str());
}

std::vector<std::size_t> filter_indices(const std::vector<Detection>& dets, const FilterConfig& config) {
    if (!(config.threshold >= 0.0 && config.threshold <= 1.0) ||
        !(config.iou_threshold >= 0.0 && config.iou_threshold <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "detection thresholds must lie in [0,1]");
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].confidence >= config.threshold) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& da = dets[a];
        const auto& db = dets[b];
        if (da.confidence != db.confidence) return da.confidence > db.confidence;
        if (da.bbox.area() != db.bbox.area()) return da.bbox.area() > db.bbox.area();
        if (da.bbox.x != db.bbox.x) return da.bbox.x < db.bbox.x;
        return a < b;
    });
    std::vector<std::size_t> kept;
    for (std::size_t i : order) {
        bool keep = true;
        for (std::size_t j : kept) {
            if (config.per_class && dets[i].class_label != dets[j].class_label) continue;
            if (iou(dets[i].bbox, dets[j].bbox) > config.iou_threshold) {
                keep = false;
                break;
            }
        }
        if (keep) kept.push_back(i);
    }
    return kept;
}

std::vector<Detection> filter_detections(const std::vector<Detection>& dets, const FilterConfig& config) {
    std::vector<Detection> out;
    for (std::size_t i : filter_indices(dets, config)) out.push_back(dets[i]);
    return out;
}

std::vector<RoiQuery> make_roi_queries(const RoomId& room_id, const std::vector<Detection>& dets,
                                       const std::vector<FeatureVector>& roi_features, const FilterConfig& config) {
    std::vector<RoiQuery> out;
    for (std::size_t i : filter_indices(dets, config)) {
        if (i >= roi_features.size()) {
            throw Error(ErrorCode::not_found, "room " + room_id + ": missing ROI feature for detection row " + std::to_string(i));
        }
        out.push_back({room_id, i, dets[i], roi_features[i]});
    }
    return out;
}

std::vector<RoiResult> room_query(const std::vector<RoiQuery>& queries, const VectorIndex& index, std::size_t k) {
    std::vector<RoiResult> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
        RoiResult r{q, {}, false};
        if (index.partitioned()) {
            if (index.has_class(q.detection.class_label)) {
                r.results = index.knn(q.feature, k, q.detection.class_label);
            } else {
                r.class_fallback = true;
                r.results = index.knn(q.feature, k);
            }
        } else {
            r.results = index.knn(q.feature, k);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RoiResult> room_query(const Room& room, const FilterConfig& config, const VectorIndex& index, std::size_t k) {
    if (!room.detections) return {};
    return room_query(make_roi_queries(room.id, *room.detections, room.roi_features, config), index, k);
}

}  // namespace stylesearch::detect
