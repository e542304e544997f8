#pragma once

#include <functional>
#include <optional>
#include <string_view>

#include "stylesearch/ranked_list.hpp"
#include "stylesearch/vector.hpp"

namespace stylesearch::blend {

enum class Strategy { simple, feature_similarity };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct Request {
    RankedList visual_results;
    RankedList text_results;
    /// Visual feature of the query ROI (normalized before use).
    std::optional<FeatureVector> query_visual_feature;
    std::size_t k = 6;
    Strategy strategy = Strategy::feature_similarity;
};

/// Alternates turns visual-first; each turn a modality contributes its best
/// item not yet emitted. An exhausted modality yields its turns. Entries keep
/// their source score and modality. Throws when both inputs are empty.
RankedList simple_blend(const Request& req);

/// Visual feature of an item (normalized), or nullopt when unknown.
using FeatureLookup = std::function<std::optional<FeatureVector>(const ItemId&)>;

/// Re-scores text candidates by Euclidean distance from the query feature in
/// visual space, keeps visual distances as-is, and returns the k closest of
/// the union (ties by id). Items found in both lists keep the smaller
/// distance and are tagged blended.
RankedList feature_blend(const Request& req, const FeatureLookup& visual_feature);

RankedList run(const Request& req, const FeatureLookup& visual_feature);

}  // namespace stylesearch::blend
