#include "stylesearch/bovw.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>

#include "stylesearch/error.hpp"
#include "stylesearch/simd/kernels.hpp"

namespace stylesearch::bovw {

namespace {

struct Assignment {
    std::size_t centroid = 0;
    double dist_sq = 0.0;
};

Assignment nearest(std::span<const float> x, const std::vector<FeatureVector>& centroids) {
    Assignment best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = simd::l2_sq(x, centroids[c].span());
        if (d < best.dist_sq) best = {c, d};
    }
    return best;
}

}  // namespace

Codebook train_codebook(const std::vector<DescriptorSet>& sets, const TrainConfig& config) {
    if (config.k < 2) throw Error(ErrorCode::invalid_argument, "codebook needs k >= 2");
    std::vector<const FeatureVector*> points;
    std::size_t dim = 0;
    for (const auto& s : sets) {
        for (const auto& d : s.descriptors) {
            if (points.empty()) dim = d.dim();
            if (d.dim() != dim) {
                throw Error(ErrorCode::dimension_mismatch, "descriptor set " + s.image_ref + ": dimension " +
                                                               std::to_string(d.dim()) + " != " + std::to_string(dim));
            }
            points.push_back(&d);
        }
    }
    const std::size_t n = points.size();
    if (n < config.k) {
        throw Error(ErrorCode::invalid_argument, "k-means needs at least k=" + std::to_string(config.k) +
                                                     " descriptors, got " + std::to_string(n));
    }

    Codebook cb;
    cb.k = config.k;
    cb.dim = dim;
    cb.training_seed = config.seed;
    std::mt19937_64 rng(config.seed);

    // k-means++ seeding
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(n, false);
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    cb.centroids.push_back(*points[first]);
    chosen[first] = true;
    while (cb.centroids.size() < config.k) {
        const auto& last = cb.centroids.back();
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], simd::l2_sq(points[i]->span(), last.span()));
            if (chosen[i]) d2[i] = 0.0;
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            pick = std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng);
        } else {
            // Remaining points coincide with centroids: take the next unchosen one.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) free.push_back(i);
            }
            pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
        }
        chosen[pick] = true;
        cb.centroids.push_back(*points[pick]);
    }

    // Lloyd iterations
    std::vector<Assignment> assign(n);
    for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = nearest(points[i]->span(), cb.centroids);
            total += assign[i].dist_sq;
        }
        assert(cb.inertia_history.empty() || total <= cb.inertia_history.back() * (1.0 + 1e-9) + 1e-12);
        cb.inertia_history.push_back(total);

        std::vector<std::vector<double>> sums(config.k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(config.k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[assign[i].centroid];
            const auto& p = *points[i];
            for (std::size_t j = 0; j < dim; ++j) s[j] += static_cast<double>(p[j]);
            ++counts[assign[i].centroid];
        }

        std::vector<FeatureVector> next(config.k);
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < config.k; ++c) {
            if (counts[c] > 0) {
                std::vector<float> v(dim);
                for (std::size_t j = 0; j < dim; ++j) v[j] = static_cast<float>(sums[c][j] / static_cast<double>(counts[c]));
                next[c] = FeatureVector(std::move(v));
            }
        }
        for (std::size_t c = 0; c < config.k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && assign[i].dist_sq > far_d) {
                    far = i;
                    far_d = assign[i].dist_sq;
                }
            }
            taken[far] = true;
            next[c] = *points[far];
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < config.k; ++c) {
            shift = std::max(shift, std::sqrt(simd::l2_sq(cb.centroids[c].span(), next[c].span())));
        }
        cb.centroids = std::move(next);
        cb.iterations = iter + 1;
        if (shift < config.tol) break;
    }
    for (const auto& c : cb.centroids) {
        if (!c.is_finite()) throw Error(ErrorCode::degenerate, "k-means produced a non-finite centroid");
    }
    return cb;
}

Histogram quantize(const DescriptorSet& set, const Codebook& codebook) {
    std::vector<float> counts(codebook.k, 0.0f);
    for (const auto& d : set.descriptors) {
        if (d.dim() != codebook.dim) {
            throw Error(ErrorCode::dimension_mismatch, "descriptor set " + set.image_ref + ": dimension " +
                                                           std::to_string(d.dim()) + " does not match codebook dimension " +
                                                           std::to_string(codebook.dim));
        }
        counts[nearest(d.span(), codebook.centroids).centroid] += 1.0f;
    }
    Histogram h;
    if (set.descriptors.empty()) {
        h.counts = FeatureVector(std::move(counts));
        h.empty = true;
        return h;
    }
    h.counts = normalize(FeatureVector(std::move(counts)));
    return h;
}

double inertia(const std::vector<DescriptorSet>& sets, const Codebook& codebook) {
    double total = 0.0;
    for (const auto& s : sets) {
        for (const auto& d : s.descriptors) total += nearest(d.span(), codebook.centroids).dist_sq;
    }
    return total;
}

VectorIndex build_histogram_index(const std::map<std::string, Histogram>& histograms, std::vector<std::string>* skipped) {
    std::vector<std::pair<ItemId, FeatureVector>> entries;
    for (const auto& [ref, h] : histograms) {
        if (h.empty) {
            if (skipped) skipped->push_back(ref);
            continue;
        }
        entries.emplace_back(ref, h.counts);
    }
    return VectorIndex::build(std::move(entries));
}

RankedList search(const VectorIndex& index, const Histogram& query, std::size_t k) {
    if (query.empty) throw Error(ErrorCode::invalid_argument, "cannot search with an empty histogram");
    return index.knn(query.counts, k);
}

std::string Codebook::serialize() const {
    std::string out = "SSCB";
    binio::put_u32(out, 1);
    binio::put_u32(out, static_cast<std::uint32_t>(k));
    binio::put_u32(out, static_cast<std::uint32_t>(dim));
    binio::put_u64(out, training_seed);
    for (const auto& c : centroids) {
        for (float v : c.values()) binio::put_f32(out, v);
    }
    return out;
}

void Codebook::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

Codebook Codebook::load(const std::filesystem::path& path) {
    binio::Reader r(binio::read_file(path), path.string());
    if (r.bytes(4) != "SSCB") throw Error(ErrorCode::parse, path.string() + ": not a codebook file");
    if (r.u32() != 1) throw Error(ErrorCode::parse, path.string() + ": unsupported codebook version");
    Codebook cb;
    cb.k = r.u32();
    cb.dim = r.u32();
    cb.training_seed = r.u64();
    for (std::size_t c = 0; c < cb.k; ++c) {
        std::vector<float> v(cb.dim);
        for (auto& x : v) x = r.f32();
        cb.centroids.emplace_back(std::move(v));
    }
    if (!r.at_end()) throw Error(ErrorCode::parse, path.string() + ": trailing bytes");
    return cb;
}

std::filesystem::path descriptor_path(const std::filesystem::path& root, const std::string& image_ref) {
    return root / (image_ref + ".desc");
}

DescriptorSet load_descriptors(const std::filesystem::path& root, const std::string& image_ref) {
    const auto p = descriptor_path(root, image_ref);
    if (!std::filesystem::exists(p)) throw Error(ErrorCode::io, "missing descriptor file " + p.string());
    return {image_ref, vecfile::read(p)};
}

}  // namespace stylesearch::bovw
