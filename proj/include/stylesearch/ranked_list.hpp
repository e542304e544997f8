#pragma once

#include <string_view>
#include <vector>

#include "stylesearch/vector.hpp"

namespace stylesearch {

enum class Modality { visual, text, blended };

std::string_view modality_name(Modality m);

struct RankedEntry {
    ItemId id;
    double score = 0.0;
    Modality modality = Modality::visual;

    friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Ordered retrieval results; index 0 is rank 1. The producer states the
/// score orientation (distances ascending, similarities descending).
using RankedList = std::vector<RankedEntry>;

/// Ids in rank order.
std::vector<ItemId> ids_of(const RankedList& list);

}  // namespace stylesearch
