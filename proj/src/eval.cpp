#include "stylesearch/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "stylesearch/blend.hpp"
#include "stylesearch/error.hpp"

namespace stylesearch::eval {

using nlohmann::json;

GroundTruth ground_truth(const Corpus& corpus) {
    GroundTruth gt;
    for (const auto& [id, room] : corpus.rooms) gt[id] = room.ground_truth;
    return gt;
}

double hit_at_k(const RoomResults& results, const GroundTruth& gt, std::size_t k) {
    if (results.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& [room, list] : results) {
        auto it = gt.find(room);
        if (it == gt.end() || it->second.empty()) {
            throw Error(ErrorCode::validation, "room " + room + " has no ground truth");
        }
        const std::size_t n = std::min(k, list.size());
        for (std::size_t r = 0; r < n; ++r) {
            if (it->second.contains(list[r].id)) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<std::pair<std::size_t, double>> recall_curve(const RoomResults& results, const GroundTruth& gt,
                                                         std::size_t k_max) {
    if (k_max == 0) throw Error(ErrorCode::invalid_argument, "k_max must be at least 1");
    // First ground-truth rank per room, then a cumulative count.
    std::vector<std::size_t> first_hit_at(k_max + 1, 0);
    for (const auto& [room, list] : results) {
        auto it = gt.find(room);
        if (it == gt.end() || it->second.empty()) {
            throw Error(ErrorCode::validation, "room " + room + " has no ground truth");
        }
        for (std::size_t r = 0; r < list.size() && r < k_max; ++r) {
            if (it->second.contains(list[r].id)) {
                ++first_hit_at[r + 1];
                break;
            }
        }
    }
    std::vector<std::pair<std::size_t, double>> curve;
    std::size_t cumulative = 0;
    const double rooms = results.empty() ? 1.0 : static_cast<double>(results.size());
    for (std::size_t k = 1; k <= k_max; ++k) {
        cumulative += first_hit_at[k];
        curve.emplace_back(k, static_cast<double>(cumulative) / rooms);
    }
    return curve;
}

double style_similarity(const CooccurrenceMatrix& c, const ItemId& f1, const ItemId& f2) {
    if (f1 == f2) throw Error(ErrorCode::invalid_argument, "style similarity is defined for distinct items only");
    if (c.max_pair_count() == 0) {
        throw Error(ErrorCode::degenerate, "style similarity undefined: no pair of items ever co-occurs");
    }
    return static_cast<double>(c.count(f1, f2)) / static_cast<double>(c.max_pair_count());
}

double mean_similarity(const std::vector<QueryResult>& results, const CooccurrenceMatrix& c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& q : results) {
        for (const auto& e : q.results) {
            if (e.id == q.query_item) continue;
            sum += style_similarity(c, q.query_item, e.id);
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

RankedList merge_roi_lists(const std::vector<RankedList>& lists, std::size_t limit) {
    RankedList out;
    std::set<ItemId> seen;
    std::size_t longest = 0;
    for (const auto& l : lists) longest = std::max(longest, l.size());
    for (std::size_t r = 0; r < longest && out.size() < limit; ++r) {
        for (const auto& l : lists) {
            if (r < l.size() && seen.insert(l[r].id).second) {
                out.push_back(l[r]);
                if (out.size() == limit) break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, std::string("experiment config: ") + e.what());
    }
    ExperimentConfig c;
    c.k_values = j.value("k_values", c.k_values);
    c.hit_k = j.value("hit_k", c.hit_k);
    c.k_max = j.value("k_max", c.k_max);
    c.blend_k = j.value("blend_k", c.blend_k);
    if (j.contains("detection")) {
        const auto& d = j["detection"];
        c.detection.threshold = d.value("threshold", c.detection.threshold);
        c.detection.iou_threshold = d.value("iou", c.detection.iou_threshold);
        c.detection.per_class = d.value("per_class_nms", c.detection.per_class);
    }
    c.class_name_query = j.value("class_name_query", c.class_name_query);
    c.text_queries = j.value("text_queries", c.text_queries);
    if (j.contains("bovw")) {
        const auto& b = j["bovw"];
        c.bovw = b.is_boolean() ? b.get<bool>() : b.value("enabled", false);
    }
    if (j.contains("labels")) {
        for (const auto& [k, v] : j["labels"].items()) c.labels[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    if (c.hit_k == 0 || c.k_max == 0 || c.blend_k == 0) throw Error(ErrorCode::invalid_argument, "k values must be positive");
    return c;
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["k_values"] = k_values;
    j["hit_k"] = hit_k;
    j["k_max"] = k_max;
    j["blend_k"] = blend_k;
    j["detection"] = {{"threshold", detection.threshold},
                      {"iou", detection.iou_threshold},
                      {"per_class_nms", detection.per_class}};
    j["class_name_query"] = class_name_query;
    j["text_queries"] = text_queries;
    j["bovw"] = bovw;
    j["labels"] = labels;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

VisualRow visual_row(std::string model, std::string setting, const RoomResults& results, const GroundTruth& gt,
                     const ExperimentConfig& config) {
    VisualRow row;
    row.model = std::move(model);
    row.setting = std::move(setting);
    std::set<std::size_t> ks(config.k_values.begin(), config.k_values.end());
    ks.insert(config.hit_k);
    for (std::size_t k : ks) {
        if (k > 0) row.hit_at_k[k] = hit_at_k(results, gt, k);
    }
    row.recall_curve = recall_curve(results, gt, config.k_max);
    for (const auto& [room, list] : results) row.room_results[room] = ids_of(list);
    return row;
}

/// Ground-truth item the query ROI depicts: nearest (visual space) among the
/// room's items of the detected class, or among all room items if none match.
std::optional<ItemId> query_item_for(const Room& room, const detect::RoiQuery& roi, const Corpus& corpus) {
    const FeatureVector q = normalize(roi.feature);
    auto best_in = [&](bool same_class) -> std::optional<ItemId> {
        std::optional<ItemId> best;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& id : room.ground_truth) {
            const Item& item = corpus.item(id);
            if (!item.visual_feature) continue;
            if (same_class && item.class_label != roi.detection.class_label) continue;
            const double d = euclidean(q, normalize(*item.visual_feature));
            if (d < best_d) {
                best_d = d;
                best = id;
            }
        }
        return best;
    };
    if (auto id = best_in(true)) return id;
    return best_in(false);
}

std::string table_cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

EvalReport run_experiment(const ExperimentInputs& in, const ExperimentConfig& config) {
    if (!in.corpus) throw Error(ErrorCode::invalid_argument, "experiment needs a corpus");
    const Corpus& corpus = *in.corpus;
    EvalReport report;
    report.hit_k = config.hit_k;
    report.fingerprint["config"] = binio::fingerprint(config.to_json());

    GroundTruth gt;
    for (const auto& [id, room] : corpus.rooms) {
        if (!room.ground_truth.empty()) gt[id] = room.ground_truth;
    }

    // Visual retrieval: whole image vs with object detection.
    if (in.visual_index) {
        const VectorIndex& index = *in.visual_index;
        report.fingerprint["visual_index"] = binio::fingerprint(index.serialize());
        RoomResults whole;
        RoomResults detected;
        bool any_whole = false;
        std::size_t fallbacks = 0;
        for (const auto& [id, _] : gt) {
            const Room& room = corpus.room(id);
            if (room.image_feature) {
                whole[id] = index.knn(*room.image_feature, config.k_max);
                any_whole = true;
            } else {
                whole[id] = {};
            }
            std::vector<RankedList> lists;
            for (auto& r : detect::room_query(room, config.detection, index, config.k_max)) {
                fallbacks += r.class_fallback ? 1 : 0;
                lists.push_back(std::move(r.results));
            }
            detected[id] = merge_roi_lists(lists, config.k_max);
        }
        if (any_whole) report.visual.push_back(visual_row("deep features", "whole_image", whole, gt, config));
        report.visual.push_back(visual_row("deep features", "with_detection", detected, gt, config));
        report.visual.back().class_fallbacks = fallbacks;
    }

    if (config.bovw) {
        if (!in.codebook || !in.descriptors) throw Error(ErrorCode::not_found, "BoVW evaluation needs a codebook and descriptors");
        report.fingerprint["codebook"] = binio::fingerprint(in.codebook->serialize());
        auto descriptors_of = [&](const std::string& ref) -> const bovw::DescriptorSet& {
            auto it = in.descriptors->find(ref);
            if (it == in.descriptors->end()) throw Error(ErrorCode::not_found, "missing descriptors for " + ref);
            return it->second;
        };
        std::vector<std::pair<ItemId, FeatureVector>> entries;
        std::map<ItemId, std::string> classes;
        for (const auto& [id, item] : corpus.items) {
            if (!item.image_ref) continue;
            const auto h = bovw::quantize(descriptors_of(*item.image_ref), *in.codebook);
            if (h.empty) continue;
            entries.emplace_back(id, h.counts);
            classes[id] = item.class_label;
        }
        const VectorIndex hist_index = VectorIndex::build(std::move(entries), &classes);
        RoomResults whole;
        RoomResults detected;
        for (const auto& [id, _] : gt) {
            const Room& room = corpus.room(id);
            whole[id] = {};
            detected[id] = {};
            if (!room.image_ref) continue;
            const auto h = bovw::quantize(descriptors_of(*room.image_ref), *in.codebook);
            if (!h.empty) whole[id] = bovw::search(hist_index, h, config.k_max);
            if (!room.detections) continue;
            std::vector<RankedList> lists;
            for (std::size_t row : detect::filter_indices(*room.detections, config.detection)) {
                const auto rh = bovw::quantize(descriptors_of(roi_image_ref(*room.image_ref, row)), *in.codebook);
                if (rh.empty) continue;
                const auto& cls = (*room.detections)[row].class_label;
                lists.push_back(hist_index.has_class(cls) ? hist_index.knn(rh.counts, config.k_max, cls)
                                                          : hist_index.knn(rh.counts, config.k_max));
            }
            detected[id] = merge_roi_lists(lists, config.k_max);
        }
        report.visual.push_back(visual_row("BoVW", "whole_image", whole, gt, config));
        report.visual.push_back(visual_row("BoVW", "with_detection", detected, gt, config));
    }

    // Style similarity of visual, text and blended results.
    if (in.visual_index && in.embeddings && in.encoder && in.words) {
        const VectorIndex& index = *in.visual_index;
        report.fingerprint["embeddings"] = binio::fingerprint(in.embeddings->serialize());
        report.fingerprint["encoder"] = binio::fingerprint(in.encoder->serialize());
        report.fingerprint["words"] = binio::fingerprint(in.words->to_text());
        const CooccurrenceMatrix cooc = build_cooccurrence(corpus);
        const VectorIndex style_index = text::build_style_index(*in.embeddings);
        const blend::FeatureLookup lookup = [&](const ItemId& id) { return index.vector_of(id); };

        struct RoomQuery {
            ItemId query_item;
            detect::RoiResult roi;
        };
        std::vector<RoomQuery> queries;
        for (const auto& [id, _] : gt) {
            const Room& room = corpus.room(id);
            if (!room.detections) {
                ++report.excluded_rooms;
                continue;
            }
            const auto rois = detect::make_roi_queries(id, *room.detections, room.roi_features, config.detection);
            if (rois.empty()) {
                ++report.excluded_rooms;
                continue;
            }
            const auto item = query_item_for(room, rois.front(), corpus);
            if (!item) {
                ++report.excluded_rooms;
                continue;
            }
            auto results = detect::room_query({rois.front()}, index, config.blend_k);
            queries.push_back({*item, std::move(results.front())});
        }
        report.evaluated_rooms = queries.size();

        auto text_list = [&](const Tokens& q) -> RankedList {
            try {
                return text::text_search(*in.encoder, *in.words, style_index, q, config.blend_k);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::all_oov) return {};
                throw;
            }
        };
        auto evaluate_row = [&](const std::string& name, const std::function<Tokens(const RoomQuery&)>& query_of,
                                bool with_text_column) {
            std::vector<QueryResult> text_r, simple_r, feature_r;
            for (const auto& q : queries) {
                const RankedList t = text_list(query_of(q));
                blend::Request req{q.roi.results, t, q.roi.query.feature, config.blend_k, blend::Strategy::simple};
                text_r.push_back({q.query_item, t});
                simple_r.push_back({q.query_item, blend::simple_blend(req)});
                feature_r.push_back({q.query_item, blend::feature_blend(req, lookup)});
            }
            BlendRow row;
            row.query = name;
            if (with_text_column) row.text = mean_similarity(text_r, cooc);
            row.simple = mean_similarity(simple_r, cooc);
            row.feature = mean_similarity(feature_r, cooc);
            return row;
        };

        std::vector<QueryResult> visual_r;
        for (const auto& q : queries) visual_r.push_back({q.query_item, q.roi.results});
        BlendRow visual_row_;
        visual_row_.query = "-";
        visual_row_.visual = mean_similarity(visual_r, cooc);
        report.blending.push_back(visual_row_);
        if (config.class_name_query) {
            report.blending.push_back(evaluate_row(
                "object class name", [](const RoomQuery& q) { return tokenize(q.roi.query.detection.class_label); },
                false));
        }
        for (const auto& word : config.text_queries) {
            const Tokens toks = tokenize(word);
            report.blending.push_back(evaluate_row(word, [&](const RoomQuery&) { return toks; }, true));
        }

        BlendRow avg;
        avg.query = "Average";
        auto average = [&](std::optional<double> BlendRow::*field) -> std::optional<double> {
            double s = 0.0;
            std::size_t n = 0;
            for (const auto& r : report.blending) {
                if (r.*field) {
                    s += *(r.*field);
                    ++n;
                }
            }
            if (n == 0) return std::nullopt;
            return s / static_cast<double>(n);
        };
        avg.visual = average(&BlendRow::visual);
        avg.text = average(&BlendRow::text);
        avg.simple = average(&BlendRow::simple);
        avg.feature = average(&BlendRow::feature);
        report.average = avg;
    }

    for (const auto& [k, v] : config.labels) report.fingerprint["label:" + k] = v;
    return report;
}

std::optional<double> EvalReport::hit(const std::string& model, const std::string& setting) const {
    for (const auto& r : visual) {
        if (r.model == model && r.setting == setting) {
            auto it = r.hit_at_k.find(hit_k);
            if (it != r.hit_at_k.end()) return it->second;
        }
    }
    return std::nullopt;
}

std::string EvalReport::to_json() const {
    json j;
    j["fingerprint"] = fingerprint;
    j["hit_k"] = hit_k;
    j["visual_search"] = json::array();
    std::vector<std::string> models;
    for (const auto& r : visual) {
        json row;
        row["model"] = r.model;
        row["setting"] = r.setting;
        row["hit_at_k"] = json::object();
        for (const auto& [k, v] : r.hit_at_k) row["hit_at_k"][std::to_string(k)] = v;
        row["recall_curve"] = json::array();
        for (const auto& [k, v] : r.recall_curve) row["recall_curve"].push_back({k, v});
        row["class_fallbacks"] = r.class_fallbacks;
        row["rooms"] = r.room_results;
        j["visual_search"].push_back(std::move(row));
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    }
    j["retrieval_table"] = json::array();
    for (const auto& m : models) {
        j["retrieval_table"].push_back({{"model", m},
                               {"whole_image", opt_json(hit(m, "whole_image"))},
                               {"with_detection", opt_json(hit(m, "with_detection"))}});
    }
    json rows = json::array();
    auto row_json = [](const BlendRow& r) {
        return json{{"query", r.query},
                    {"visual", opt_json(r.visual)},
                    {"text", opt_json(r.text)},
                    {"simple", opt_json(r.simple)},
                    {"feature_similarity", opt_json(r.feature)}};
    };
    for (const auto& r : blending) rows.push_back(row_json(r));
    j["blending"] = {{"rows", rows},
                     {"average", average ? row_json(*average) : json(nullptr)},
                     {"evaluated_rooms", evaluated_rooms},
                     {"excluded_rooms", excluded_rooms}};
    return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
    std::ostringstream ss;
    std::vector<std::string> models;
    for (const auto& r : visual) {
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    }
    if (!models.empty()) {
        ss << "Content-based retrieval, Hit@" << hit_k << "\n";
        ss << std::left << std::setw(16) << "Model" << std::setw(14) << "whole image"
           << "with object detection\n";
        for (const auto& m : models) {
            ss << std::left << std::setw(16) << m << std::setw(14) << table_cell(hit(m, "whole_image"))
               << table_cell(hit(m, "with_detection")) << "\n";
        }
        ss << "\n";
    }
    if (!blending.empty()) {
        ss << "Mean style similarity (" << evaluated_rooms << " rooms, " << excluded_rooms << " excluded)\n";
        ss << std::left << std::setw(20) << "Text query" << std::setw(15) << "Visual search" << std::setw(13)
           << "Text search" << std::setw(17) << "Simple blending"
           << "Feature similarity blending\n";
        auto line = [&](const BlendRow& r) {
            ss << std::left << std::setw(20) << r.query << std::setw(15) << table_cell(r.visual) << std::setw(13)
               << table_cell(r.text) << std::setw(17) << table_cell(r.simple) << table_cell(r.feature) << "\n";
        };
        for (const auto& r : blending) line(r);
        if (average) line(*average);
    }
    return ss.str();
}

std::string EvalReport::curves_csv() const {
    std::ostringstream ss;
    ss << "model,setting,k,recall\n";
    ss << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : visual) {
        for (const auto& [k, v] : r.recall_curve) ss << r.model << ',' << r.setting << ',' << k << ',' << v << "\n";
    }
    return ss.str();
}

}  // namespace stylesearch::eval
