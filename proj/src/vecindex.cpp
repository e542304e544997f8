#include "stylesearch/vecindex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylesearch/corpus.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/simd/kernels.hpp"

namespace stylesearch {

namespace {
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagPartitioned = 1;
}  // namespace

VectorIndex VectorIndex::build(std::vector<std::pair<ItemId, FeatureVector>> entries,
                               const std::map<ItemId, std::string>* classes) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].first == entries[i - 1].first) {
            throw Error(ErrorCode::duplicate_id, "duplicate id " + entries[i].first + " in index build");
        }
    }
    VectorIndex index;
    if (!entries.empty()) index.dim_ = entries.front().second.dim();
    index.ids_.reserve(entries.size());
    index.data_.reserve(entries.size() * index.dim_);
    for (auto& [id, v] : entries) {
        if (v.dim() != index.dim_) {
            throw Error(ErrorCode::dimension_mismatch, "item " + id + ": dimension " + std::to_string(v.dim()) +
                                                           " differs from index dimension " + std::to_string(index.dim_));
        }
        const FeatureVector n = normalize(v);
        index.data_.insert(index.data_.end(), n.values().begin(), n.values().end());
        index.ids_.push_back(id);
        if (classes) {
            auto it = classes->find(id);
            if (it == classes->end()) throw Error(ErrorCode::not_found, "no class label for item " + id);
            index.classes_.push_back(it->second);
        }
    }
    index.all_.resize(index.ids_.size());
    std::iota(index.all_.begin(), index.all_.end(), std::size_t{0});
    for (std::size_t i = 0; i < index.classes_.size(); ++i) index.partitions_[index.classes_[i]].push_back(i);
    return index;
}

std::optional<std::size_t> VectorIndex::find(const ItemId& id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
}

FeatureVector VectorIndex::vector(std::size_t i) const {
    auto r = row(i);
    return FeatureVector(std::vector<float>(r.begin(), r.end()));
}

std::optional<FeatureVector> VectorIndex::vector_of(const ItemId& id) const {
    if (auto i = find(id)) return vector(*i);
    return std::nullopt;
}

std::vector<std::string> VectorIndex::classes() const {
    std::vector<std::string> out;
    for (const auto& [c, _] : partitions_) out.push_back(c);
    return out;
}

std::span<const std::size_t> VectorIndex::partition(const std::string& class_label) const {
    auto it = partitions_.find(class_label);
    if (it == partitions_.end()) throw Error(ErrorCode::not_found, "unknown class partition '" + class_label + "'");
    return it->second;
}

template <class Score, class Better>
RankedList VectorIndex::top_k(std::span<const std::size_t> candidates, std::size_t k, Score score, Better better,
                              Modality modality) const {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(candidates.size());
    for (std::size_t i : candidates) scored.emplace_back(score(row(i)), i);
    // Entry index order equals id order, so (score, index) is the id tie-break.
    auto cmp = [&](const auto& a, const auto& b) {
        if (a.first != b.first) return better(a.first, b.first);
        return a.second < b.second;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), cmp);
    RankedList out;
    out.reserve(n);
    for (std::size_t r = 0; r < n; ++r) out.push_back({ids_[scored[r].second], scored[r].first, modality});
    return out;
}

RankedList VectorIndex::knn(const FeatureVector& query, std::size_t k,
                            const std::optional<std::string>& class_filter) const {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    if (query.dim() != dim_) {
        throw Error(ErrorCode::dimension_mismatch, "query dimension " + std::to_string(query.dim()) +
                                                       " does not match index dimension " + std::to_string(dim_));
    }
    const FeatureVector q = normalize(query);
    std::span<const std::size_t> candidates = all_;
    if (class_filter) candidates = partition(*class_filter);
    return top_k(
        candidates, k, [&](std::span<const float> v) { return std::sqrt(simd::l2_sq(q.span(), v)); },
        [](double a, double b) { return a < b; }, Modality::visual);
}

RankedList VectorIndex::knn_cosine(const FeatureVector& query, std::size_t k) const {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    if (query.dim() != dim_) {
        throw Error(ErrorCode::dimension_mismatch, "query dimension " + std::to_string(query.dim()) +
                                                       " does not match index dimension " + std::to_string(dim_));
    }
    const FeatureVector q = normalize(query);
    return top_k(
        all_, k, [&](std::span<const float> v) { return simd::dot(q.span(), v); },
        [](double a, double b) { return a > b; }, Modality::text);
}

std::string VectorIndex::serialize() const {
    std::string out;
    out += "SSIX";
    binio::put_u32(out, kVersion);
    binio::put_u32(out, static_cast<std::uint32_t>(dim_));
    binio::put_u32(out, static_cast<std::uint32_t>(ids_.size()));
    binio::put_u32(out, classes_.empty() ? 0u : kFlagPartitioned);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        binio::put_str(out, ids_[i]);
        binio::put_str(out, classes_.empty() ? std::string{} : classes_[i]);
    }
    for (float v : data_) binio::put_f32(out, v);
    return out;
}

void VectorIndex::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    binio::Reader r(binio::read_file(path), path.string());
    if (r.bytes(4) != "SSIX") throw Error(ErrorCode::parse, path.string() + ": not an SSIX index file");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw Error(ErrorCode::parse, path.string() + ": unsupported index version " + std::to_string(version));
    const std::uint32_t dim = r.u32();
    const std::uint32_t count = r.u32();
    const std::uint32_t flags = r.u32();
    std::vector<std::pair<ItemId, FeatureVector>> entries(count);
    std::map<ItemId, std::string> classes;
    for (auto& e : entries) {
        e.first = r.str();
        std::string cls = r.str();
        if (flags & kFlagPartitioned) classes[e.first] = std::move(cls);
    }
    for (auto& e : entries) {
        std::vector<float> v(dim);
        for (auto& x : v) x = r.f32();
        e.second = FeatureVector(std::move(v));
    }
    if (!r.at_end()) throw Error(ErrorCode::parse, path.string() + ": trailing bytes");

    // Stored vectors are already normalized; keep their exact bytes.
    VectorIndex index;
    index.dim_ = dim;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i > 0 && !(entries[i - 1].first < entries[i].first)) {
            throw Error(ErrorCode::parse, path.string() + ": id table not strictly sorted");
        }
        index.ids_.push_back(entries[i].first);
        index.data_.insert(index.data_.end(), entries[i].second.values().begin(), entries[i].second.values().end());
        if (flags & kFlagPartitioned) index.classes_.push_back(classes[entries[i].first]);
    }
    index.all_.resize(index.ids_.size());
    std::iota(index.all_.begin(), index.all_.end(), std::size_t{0});
    for (std::size_t i = 0; i < index.classes_.size(); ++i) index.partitions_[index.classes_[i]].push_back(i);
    return index;
}

VectorIndex build_index(std::vector<std::pair<ItemId, FeatureVector>> items, bool partition_by_class,
                        const Corpus& corpus) {
    if (!partition_by_class) return VectorIndex::build(std::move(items));
    std::map<ItemId, std::string> classes;
    for (const auto& [id, _] : items) classes[id] = corpus.item(id).class_label;
    return VectorIndex::build(std::move(items), &classes);
}

VectorIndex build_index(const Corpus& corpus, bool partition_by_class) {
    std::vector<std::pair<ItemId, FeatureVector>> items;
    for (const auto& [id, item] : corpus.items) {
        if (item.visual_feature) items.emplace_back(id, *item.visual_feature);
    }
    return build_index(std::move(items), partition_by_class, corpus);
}

}  // namespace stylesearch
