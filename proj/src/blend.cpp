#include "stylesearch/blend.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "stylesearch/error.hpp"

namespace stylesearch::blend {

std::string_view strategy_name(Strategy s) { return s == Strategy::simple ? "simple" : "feature_similarity"; }

Strategy parse_strategy(std::string_view name) {
    if (name == "simple") return Strategy::simple;
    if (name == "feature_similarity" || name == "feature") return Strategy::feature_similarity;
    throw Error(ErrorCode::invalid_argument, "unknown blending strategy '" + std::string(name) + "'");
}

RankedList simple_blend(const Request& req) {
    if (req.k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    if (req.visual_results.empty() && req.text_results.empty()) {
        throw Error(ErrorCode::invalid_argument, "nothing to blend: both modalities returned no results");
    }
    RankedList out;
    std::set<ItemId> seen;
    std::size_t vi = 0;
    std::size_t ti = 0;
    auto next = [&](const RankedList& list, std::size_t& pos) -> const RankedEntry* {
        while (pos < list.size() && seen.contains(list[pos].id)) ++pos;
        return pos < list.size() ? &list[pos++] : nullptr;
    };
    bool visual_turn = true;
    while (out.size() < req.k) {
        const RankedEntry* e = visual_turn ? next(req.visual_results, vi) : next(req.text_results, ti);
        if (!e) e = visual_turn ? next(req.text_results, ti) : next(req.visual_results, vi);
        if (!e) break;
        seen.insert(e->id);
        out.push_back(*e);
        visual_turn = !visual_turn;
    }
    return out;
}

RankedList feature_blend(const Request& req, const FeatureLookup& visual_feature) {
    if (req.k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    if (!req.query_visual_feature) throw Error(ErrorCode::invalid_argument, "feature blending needs the query visual feature");
    const FeatureVector query = normalize(*req.query_visual_feature);

    std::map<ItemId, RankedEntry> best;
    for (const auto& e : req.visual_results) {
        auto [it, inserted] = best.emplace(e.id, RankedEntry{e.id, e.score, Modality::visual});
        if (!inserted && e.score < it->second.score) it->second.score = e.score;
    }
    for (const auto& e : req.text_results) {
        const auto f = visual_feature(e.id);
        if (!f) throw Error(ErrorCode::not_found, "text candidate " + e.id + " has no visual feature");
        const double d = euclidean(query, *f);
        auto [it, inserted] = best.emplace(e.id, RankedEntry{e.id, d, Modality::text});
        if (!inserted) {
            if (it->second.modality == Modality::visual) it->second.modality = Modality::blended;
            it->second.score = std::min(it->second.score, d);
        }
    }
    RankedList all;
    all.reserve(best.size());
    for (auto& [_, e] : best) all.push_back(std::move(e));
    std::stable_sort(all.begin(), all.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.id < b.id;
    });
    if (all.size() > req.k) all.resize(req.k);
    return all;
}

RankedList run(const Request& req, const FeatureLookup& visual_feature) {
    return req.strategy == Strategy::simple ? simple_blend(req) : feature_blend(req, visual_feature);
}

}  // namespace stylesearch::blend
