#include "stylesearch/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "stylesearch/error.hpp"

namespace stylesearch {

using nlohmann::json;
namespace fs = std::filesystem;

Tokens tokenize(std::string_view text) {
    Tokens out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '-' || c == '_' || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

std::string join(const Tokens& tokens) {
    std::string s;
    for (const auto& t : tokens) {
        if (!s.empty()) s.push_back(' ');
        s += t;
    }
    return s;
}

std::string safe_name(const std::string& id) {
    std::string s = id;
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    }
    return s;
}

Tokens read_description(const json& j) {
    if (!j.contains("description") || j["description"].is_null()) return {};
    const auto& d = j["description"];
    if (d.is_string()) return tokenize(d.get<std::string>());
    if (d.is_array()) {
        Tokens t;
        for (const auto& tok : d) {
            for (auto& part : tokenize(tok.get<std::string>())) t.push_back(std::move(part));
        }
        return t;
    }
    throw Error(ErrorCode::parse, "description must be a string or an array of strings");
}

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
}

/// Loads vector files once and hands out rows.
class VectorFileCache {
public:
    explicit VectorFileCache(fs::path root) : root_(std::move(root)) {}

    const std::vector<FeatureVector>& rows(const std::string& rel) {
        auto it = cache_.find(rel);
        if (it != cache_.end()) return it->second;
        const fs::path p = root_ / rel;
        if (!fs::exists(p)) throw Error(ErrorCode::io, "missing feature file " + p.string());
        return cache_.emplace(rel, vecfile::read(p)).first->second;
    }

    FeatureVector row(const std::string& rel, std::size_t index, const std::string& owner) {
        const auto& all = rows(rel);
        if (index >= all.size()) {
            throw Error(ErrorCode::validation, owner + ": row " + std::to_string(index) + " out of range in " + rel);
        }
        return all[index];
    }

private:
    fs::path root_;
    std::map<std::string, std::vector<FeatureVector>> cache_;
};

void check_dim(const FeatureVector& v, std::optional<std::size_t>& expected, const std::string& what) {
    if (!expected) {
        expected = v.dim();
        return;
    }
    if (v.dim() != *expected) {
        throw Error(ErrorCode::dimension_mismatch, what + ": dimension " + std::to_string(v.dim()) +
                                                       " does not match expected " + std::to_string(*expected));
    }
}

}  // namespace

const Item& Corpus::item(const ItemId& id) const {
    auto it = items.find(id);
    if (it == items.end()) throw Error(ErrorCode::not_found, "unknown item " + id);
    return it->second;
}

const Room& Corpus::room(const RoomId& id) const {
    auto it = rooms.find(id);
    if (it == rooms.end()) throw Error(ErrorCode::not_found, "unknown room " + id);
    return it->second;
}

void validate(const Corpus& corpus) {
    if (corpus.items.empty()) throw Error(ErrorCode::validation, "corpus has no items");
    std::optional<std::size_t> visual_dim;
    std::optional<std::size_t> style_dim;
    for (const auto& [id, item] : corpus.items) {
        if (id.empty() || item.id != id) throw Error(ErrorCode::validation, "item key/id mismatch for '" + id + "'");
        if (item.class_label.empty()) throw Error(ErrorCode::validation, "item " + id + ": empty class label");
        if (item.visual_feature) {
            if (!item.visual_feature->is_finite()) throw Error(ErrorCode::validation, "item " + id + ": non-finite feature");
            check_dim(*item.visual_feature, visual_dim, "item " + id + " feature");
        }
        if (item.style_embedding) check_dim(*item.style_embedding, style_dim, "item " + id + " embedding");
    }
    for (const auto& [id, room] : corpus.rooms) {
        if (id.empty() || room.id != id) throw Error(ErrorCode::validation, "room key/id mismatch for '" + id + "'");
        for (const auto& gt : room.ground_truth) {
            if (!corpus.items.contains(gt)) {
                throw Error(ErrorCode::dangling_reference, "room " + id + " references unknown item " + gt);
            }
        }
        if (room.detections) {
            for (std::size_t i = 0; i < room.detections->size(); ++i) {
                detect::validate((*room.detections)[i], "room " + id + " detection row " + std::to_string(i));
            }
            if (!room.roi_features.empty() && room.roi_features.size() != room.detections->size()) {
                throw Error(ErrorCode::validation, "room " + id + ": " + std::to_string(room.roi_features.size()) +
                                                       " ROI features for " + std::to_string(room.detections->size()) +
                                                       " detections");
            }
        } else if (!room.roi_features.empty()) {
            throw Error(ErrorCode::validation, "room " + id + ": ROI features without detections");
        }
        for (std::size_t i = 0; i < room.roi_features.size(); ++i) {
            check_dim(room.roi_features[i], visual_dim, "room " + id + " ROI feature " + std::to_string(i));
        }
        if (room.image_feature) check_dim(*room.image_feature, visual_dim, "room " + id + " image feature");
    }
}

Corpus load_corpus(const fs::path& root) {
    const fs::path manifest = root / "corpus.json";
    if (!fs::exists(manifest)) throw Error(ErrorCode::io, "missing file " + manifest.string());
    json doc;
    try {
        doc = json::parse(binio::read_file(manifest));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, manifest.string() + ": " + e.what());
    }

    Corpus corpus;
    VectorFileCache files(root);
    std::optional<std::size_t> declared_feature_dim;
    std::optional<std::size_t> declared_embedding_dim;
    if (doc.contains("feature_dim")) declared_feature_dim = doc["feature_dim"].get<std::size_t>();
    if (doc.contains("embedding_dim")) declared_embedding_dim = doc["embedding_dim"].get<std::size_t>();
    if (doc.contains("meta")) {
        for (const auto& [k, v] : doc["meta"].items()) corpus.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }

    if (!doc.contains("items") || !doc["items"].is_array()) throw Error(ErrorCode::parse, manifest.string() + ": missing items array");
    std::size_t index = 0;
    for (const auto& j : doc["items"]) {
        const std::string where = "item record " + std::to_string(index++);
        try {
            Item item;
            item.id = j.at("id").get<std::string>();
            if (item.id.empty()) throw Error(ErrorCode::validation, where + ": empty id");
            item.class_label = j.at("class").get<std::string>();
            item.name = j.value("name", std::string{});
            item.description = read_description(j);
            item.image_ref = opt_string(j, "image");
            if (auto f = opt_string(j, "feature_file")) {
                item.visual_feature = files.row(*f, j.value("feature_row", std::size_t{0}), "item " + item.id);
                std::optional<std::size_t> dim = j.contains("feature_dim") ? std::optional(j["feature_dim"].get<std::size_t>())
                                                                            : declared_feature_dim;
                check_dim(*item.visual_feature, dim, "item " + item.id + " feature (" + *f + ")");
            }
            if (auto f = opt_string(j, "embedding_file")) {
                item.style_embedding = files.row(*f, j.value("embedding_row", std::size_t{0}), "item " + item.id);
                std::optional<std::size_t> dim = declared_embedding_dim;
                check_dim(*item.style_embedding, dim, "item " + item.id + " embedding (" + *f + ")");
            }
            const ItemId id = item.id;
            if (!corpus.items.emplace(id, std::move(item)).second) {
                throw Error(ErrorCode::duplicate_id, "duplicate item id " + id);
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::parse, where + ": " + e.what());
        }
    }

    index = 0;
    for (const auto& j : doc.value("rooms", json::array())) {
        const std::string where = "room record " + std::to_string(index++);
        try {
            Room room;
            room.id = j.at("id").get<std::string>();
            if (room.id.empty()) throw Error(ErrorCode::validation, where + ": empty id");
            room.category = j.value("category", std::string{});
            room.description = read_description(j);
            room.image_ref = opt_string(j, "image");
            for (const auto& id : j.value("items", json::array())) room.ground_truth.insert(id.get<std::string>());
            if (auto f = opt_string(j, "detections_file")) {
                const fs::path p = root / *f;
                if (!fs::exists(p)) throw Error(ErrorCode::io, "room " + room.id + ": missing detections file " + p.string());
                room.detections = detect::load_detections(p);
            }
            if (auto f = opt_string(j, "roi_feature_file")) room.roi_features = files.rows(*f);
            if (auto f = opt_string(j, "feature_file")) {
                room.image_feature = files.row(*f, j.value("feature_row", std::size_t{0}), "room " + room.id);
            }
            const RoomId id = room.id;
            if (!corpus.rooms.emplace(id, std::move(room)).second) {
                throw Error(ErrorCode::duplicate_id, "duplicate room id " + id);
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::parse, where + ": " + e.what());
        }
    }

    validate(corpus);
    return corpus;
}

void save_corpus(const Corpus& corpus, const fs::path& root) {
    fs::create_directories(root);
    json doc;
    doc["meta"] = json::object();
    for (const auto& [k, v] : corpus.meta) doc["meta"][k] = v;

    std::vector<FeatureVector> item_features;
    std::vector<FeatureVector> item_styles;
    std::vector<FeatureVector> room_features;
    json items = json::array();
    for (const auto& [id, item] : corpus.items) {
        json j;
        j["id"] = id;
        j["class"] = item.class_label;
        j["name"] = item.name;
        j["description"] = join(item.description);
        j["image"] = item.image_ref ? json(*item.image_ref) : json(nullptr);
        if (item.visual_feature) {
            j["feature_file"] = "features/items.fvec";
            j["feature_row"] = item_features.size();
            item_features.push_back(*item.visual_feature);
        }
        if (item.style_embedding) {
            j["embedding_file"] = "features/item_styles.fvec";
            j["embedding_row"] = item_styles.size();
            item_styles.push_back(*item.style_embedding);
        }
        items.push_back(std::move(j));
    }
    doc["items"] = std::move(items);
    if (!item_features.empty()) doc["feature_dim"] = item_features.front().dim();
    if (!item_styles.empty()) doc["embedding_dim"] = item_styles.front().dim();

    json rooms = json::array();
    for (const auto& [id, room] : corpus.rooms) {
        json j;
        j["id"] = id;
        j["category"] = room.category;
        j["description"] = join(room.description);
        j["image"] = room.image_ref ? json(*room.image_ref) : json(nullptr);
        j["items"] = json::array();
        for (const auto& gt : room.ground_truth) j["items"].push_back(gt);
        if (room.detections) {
            const std::string rel = "detections/" + safe_name(id) + ".txt";
            detect::save_detections(root / rel, *room.detections);
            j["detections_file"] = rel;
            if (!room.roi_features.empty()) {
                const std::string roi_rel = "roi/" + safe_name(id) + ".fvec";
                vecfile::write(root / roi_rel, room.roi_features);
                j["roi_feature_file"] = roi_rel;
            }
        }
        if (room.image_feature) {
            j["feature_file"] = "features/rooms.fvec";
            j["feature_row"] = room_features.size();
            room_features.push_back(*room.image_feature);
        }
        rooms.push_back(std::move(j));
    }
    doc["rooms"] = std::move(rooms);

    if (!item_features.empty()) vecfile::write(root / "features/items.fvec", item_features);
    if (!item_styles.empty()) vecfile::write(root / "features/item_styles.fvec", item_styles);
    if (!room_features.empty()) vecfile::write(root / "features/rooms.fvec", room_features);
    binio::write_file(root / "corpus.json", doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Co-occurrence

CooccurrenceMatrix::CooccurrenceMatrix(std::vector<ItemId> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
    counts_.assign(ids_.size() * ids_.size(), 0);
}

std::optional<std::size_t> CooccurrenceMatrix::index_of(const ItemId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::uint32_t CooccurrenceMatrix::count(const ItemId& a, const ItemId& b) const {
    const auto ia = index_of(a);
    const auto ib = index_of(b);
    if (!ia) throw Error(ErrorCode::not_found, "item " + a + " not in co-occurrence matrix");
    if (!ib) throw Error(ErrorCode::not_found, "item " + b + " not in co-occurrence matrix");
    return at(*ia, *ib);
}

void CooccurrenceMatrix::add_room(const std::set<ItemId>& members) {
    std::vector<std::size_t> idx;
    idx.reserve(members.size());
    for (const auto& m : members) {
        const auto i = index_of(m);
        if (!i) throw Error(ErrorCode::dangling_reference, "room member " + m + " not in co-occurrence matrix");
        idx.push_back(*i);
    }
    const std::size_t n = ids_.size();
    for (std::size_t a : idx) {
        for (std::size_t b : idx) {
            const std::uint32_t c = ++counts_[a * n + b];
            if (a != b) max_pair_ = std::max(max_pair_, c);
        }
    }
}

CooccurrenceMatrix build_cooccurrence(const Corpus& corpus) {
    std::vector<ItemId> ids;
    ids.reserve(corpus.items.size());
    for (const auto& [id, _] : corpus.items) ids.push_back(id);
    CooccurrenceMatrix c(std::move(ids));
    for (const auto& [_, room] : corpus.rooms) c.add_room(room.ground_truth);
    return c;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

const std::vector<std::string>& lexicon() {
    static const std::vector<std::string> words = [] {
        std::vector<std::string> w = {
            // style words, three per synthetic cluster
            "white", "black", "decorative", "smooth", "cosy", "fabric", "colourful", "oak", "pine", "rustic",
            "modern", "classic", "minimalist", "scandinavian", "vintage", "industrial", "glossy", "matte",
            "leather", "velvet", "wool", "linen", "bamboo", "walnut", "birch", "marble", "glass", "metal",
            "chrome", "brass", "rattan", "wicker", "pastel", "bright", "dark", "natural",
            // object and room words
            "chair", "table", "sofa", "bed", "wall", "clock", "pottedplant", "plant", "lamp", "shelf", "desk",
            "cabinet", "wardrobe", "stool", "bench", "armchair", "mirror", "rug", "curtain", "cushion", "vase",
            "drawer", "dresser", "sideboard", "bookcase", "ottoman", "frame", "basket", "tray", "candle",
            "kitchen", "living", "room", "bedroom", "children", "office", "bathroom", "dining", "hallway",
            "nursery", "garden", "balcony",
            // filler
            "with", "for", "and", "the", "of", "in", "soft", "large", "small", "tall", "low", "wide", "narrow",
            "round", "square", "storage", "comfortable", "durable", "easy", "clean", "care", "design", "home",
            "family", "space", "light", "heavy", "practical", "compact", "stackable", "adjustable", "foldable",
            "removable", "washable", "cover", "seat", "back", "legs", "top", "surface", "finish", "colour",
            "pattern", "stripes", "dots", "floral", "geometric", "texture", "warm", "cool", "fresh", "calm",
            "elegant", "simple", "stylish", "timeless", "cheerful", "playful", "sturdy", "solid", "wood",
            "steel", "plastic", "cotton", "polyester", "ceramic", "stone", "paper", "handmade", "crafted",
            "designed", "perfect", "ideal", "everyday", "relax", "sleep", "work", "play", "read", "eat", "cook",
            "store", "display", "organise", "hang", "mount", "place", "combine", "match", "mix", "create",
            "personal", "unique", "gentle", "quiet", "open", "closed", "double", "single", "extra", "built",
            "frame", "base", "holder", "hook", "rail", "box", "lid", "handle", "knob", "wheel", "castor",
        };
        // de-duplicate while keeping order, then pad to 200
        std::vector<std::string> out;
        for (auto& s : w) {
            if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
        }
        for (std::size_t i = 0; out.size() < 200; ++i) out.push_back("term" + std::to_string(i));
        out.resize(200);
        return out;
    }();
    return words;
}

namespace {
constexpr std::size_t kStyleWords = 36;

std::size_t filler_start() {
    const auto& lex = lexicon();
    return static_cast<std::size_t>(std::find(lex.begin(), lex.end(), "with") - lex.begin());
}
}  // namespace

std::vector<std::string> cluster_style_tokens(std::size_t cluster) {
    const auto& lex = lexicon();
    std::vector<std::string> out;
    for (std::size_t i = 0; i < 3; ++i) out.push_back(lex[(cluster * 3 + i) % kStyleWords]);
    return out;
}

SynthSpec synth_spec_from_json(const std::string& json_text) {
    SynthSpec s;
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, std::string("synth spec: ") + e.what());
    }
    s.clusters = j.value("clusters", s.clusters);
    s.items_per_cluster = j.value("items_per_cluster", s.items_per_cluster);
    s.rooms_per_cluster = j.value("rooms_per_cluster", s.rooms_per_cluster);
    s.items_per_room = j.value("items_per_room", s.items_per_room);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.noise = j.value("noise", s.noise);
    s.class_weight = j.value("class_weight", s.class_weight);
    s.roi_noise = j.value("roi_noise", s.roi_noise);
    s.clutter = j.value("clutter", s.clutter);
    s.spurious_detections = j.value("spurious_detections", s.spurious_detections);
    s.descriptor_dim = j.value("descriptor_dim", s.descriptor_dim);
    s.descriptors_per_image = j.value("descriptors_per_image", s.descriptors_per_image);
    s.classes = j.value("classes", s.classes);
    s.categories = j.value("categories", s.categories);
    return s;
}

std::string synth_spec_to_json(const SynthSpec& s) {
    json j;
    j["clusters"] = s.clusters;
    j["items_per_cluster"] = s.items_per_cluster;
    j["rooms_per_cluster"] = s.rooms_per_cluster;
    j["items_per_room"] = s.items_per_room;
    j["feature_dim"] = s.feature_dim;
    j["noise"] = s.noise;
    j["class_weight"] = s.class_weight;
    j["roi_noise"] = s.roi_noise;
    j["clutter"] = s.clutter;
    j["spurious_detections"] = s.spurious_detections;
    j["descriptor_dim"] = s.descriptor_dim;
    j["descriptors_per_image"] = s.descriptors_per_image;
    j["classes"] = s.classes;
    j["categories"] = s.categories;
    return j.dump(2);
}

std::string roi_image_ref(const std::string& room_image_ref, std::size_t row) {
    return room_image_ref + ".roi" + std::to_string(row);
}

namespace {

std::string padded(const char* prefix, std::size_t n, int width) {
    std::string num = std::to_string(n);
    if (static_cast<int>(num.size()) < width) num.insert(0, static_cast<std::size_t>(width) - num.size(), '0');
    return prefix + num;
}

class SynthRng {
public:
    explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return normal_(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
    bool coin(double p) { return uniform(0.0, 1.0) < p; }

    std::vector<double> gaussian(std::size_t dim, double scale) {
        std::vector<double> v(dim);
        for (auto& x : v) x = scale * normal();
        return v;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

FeatureVector to_feature(const std::vector<double>& v) {
    std::vector<float> f(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
    return FeatureVector(std::move(f));
}

void add_scaled(std::vector<double>& acc, const std::vector<double>& v, double s) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * v[i];
}

}  // namespace

SynthResult synth(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.clusters == 0 || spec.items_per_cluster == 0) {
        throw Error(ErrorCode::invalid_argument, "synth spec needs at least one cluster and one item per cluster");
    }
    if (spec.feature_dim == 0) throw Error(ErrorCode::invalid_argument, "synth spec feature_dim must be positive");
    if (spec.classes.empty()) throw Error(ErrorCode::invalid_argument, "synth spec needs at least one class");
    if (spec.categories.empty()) throw Error(ErrorCode::invalid_argument, "synth spec needs at least one category");

    SynthRng rng(seed);
    const auto& lex = lexicon();
    const std::size_t dim = spec.feature_dim;

    std::vector<std::vector<double>> cluster_centre(spec.clusters);
    for (auto& c : cluster_centre) c = rng.gaussian(dim, 1.0);
    std::vector<std::vector<double>> class_centre(spec.classes.size());
    for (auto& c : class_centre) c = rng.gaussian(dim, 1.0);

    SynthResult out;
    Corpus& corpus = out.corpus;
    corpus.meta["generator"] = "synth";
    corpus.meta["seed"] = std::to_string(seed);
    corpus.meta["synth_spec"] = synth_spec_to_json(spec);
    corpus.meta["sift_contrast_threshold"] = "0.05";
    corpus.meta["sift_edge_threshold"] = "11";
    corpus.meta["sift_norm"] = "L2";

    std::vector<std::vector<ItemId>> cluster_items(spec.clusters);
    std::map<ItemId, std::vector<double>> raw_feature;
    std::size_t item_no = 0;
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        const auto style = cluster_style_tokens(c);
        for (std::size_t j = 0; j < spec.items_per_cluster; ++j) {
            Item item;
            item.id = padded("item", item_no++, 4);
            const std::size_t cls = j % spec.classes.size();
            item.class_label = spec.classes[cls];

            std::vector<double> f = cluster_centre[c];
            add_scaled(f, class_centre[cls], spec.class_weight);
            add_scaled(f, rng.gaussian(dim, 1.0), spec.noise);
            item.visual_feature = to_feature(f);
            raw_feature[item.id] = f;

            const std::size_t a = rng.index(3);
            const std::size_t b = (a + 1 + rng.index(2)) % 3;
            item.description = tokenize(item.class_label);
            item.description.push_back(style[a]);
            item.description.push_back(style[b]);
            item.description.push_back(lex[filler_start() + rng.index(lex.size() - filler_start())]);
            item.name = style[0] + " " + item.class_label + " " + std::to_string(j);
            item.image_ref = "items/" + item.id + ".jpg";

            cluster_items[c].push_back(item.id);
            out.item_cluster[item.id] = c;
            corpus.items.emplace(item.id, std::move(item));
        }
    }

    std::size_t room_no = 0;
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        const auto style = cluster_style_tokens(c);
        for (std::size_t r = 0; r < spec.rooms_per_cluster; ++r) {
            Room room;
            room.id = padded("room", room_no++, 4);
            room.category = spec.categories[c % spec.categories.size()];
            room.description = tokenize(room.category);
            room.description.push_back(style[rng.index(3)]);
            room.image_ref = "rooms/" + room.id + ".jpg";

            std::vector<ItemId> members = cluster_items[c];
            if (spec.items_per_room > 0 && spec.items_per_room < members.size()) {
                std::shuffle(members.begin(), members.end(), rng.engine());
                members.resize(spec.items_per_room);
                std::sort(members.begin(), members.end());
            }
            room.ground_truth.insert(members.begin(), members.end());

            // Detections laid out on a grid over a 640x480 image.
            const std::size_t m = members.size();
            const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
            const std::size_t rows = (m + cols - 1) / cols;
            const double cw = 640.0 / static_cast<double>(cols);
            const double ch = 480.0 / static_cast<double>(rows);
            std::vector<Detection> dets;
            std::vector<FeatureVector> rois;
            std::vector<std::optional<ItemId>> sources;
            std::vector<double> whole(dim, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                const ItemId& id = members[i];
                const auto& f = raw_feature[id];
                add_scaled(whole, f, 1.0 / static_cast<double>(m));

                Detection d;
                d.class_label = corpus.items.at(id).class_label;
                d.bbox.x = std::floor(static_cast<double>(i % cols) * cw + rng.uniform(0.0, 0.1) * cw);
                d.bbox.y = std::floor(static_cast<double>(i / cols) * ch + rng.uniform(0.0, 0.1) * ch);
                d.bbox.width = std::floor(cw * rng.uniform(0.6, 0.85));
                d.bbox.height = std::floor(ch * rng.uniform(0.6, 0.85));
                d.confidence = std::round(rng.uniform(0.3, 0.99) * 1000.0) / 1000.0;
                dets.push_back(d);
                std::vector<double> roi = f;
                add_scaled(roi, rng.gaussian(dim, 1.0), spec.roi_noise);
                rois.push_back(to_feature(roi));
                sources.emplace_back(id);

                if (spec.spurious_detections && rng.coin(0.3)) {
                    Detection dup = d;
                    dup.bbox.x += std::floor(0.05 * d.bbox.width);
                    dup.bbox.y += std::floor(0.05 * d.bbox.height);
                    dup.confidence = std::round(d.confidence * 800.0) / 1000.0;
                    dets.push_back(dup);
                    std::vector<double> droi = f;
                    add_scaled(droi, rng.gaussian(dim, 1.0), 2.0 * spec.roi_noise);
                    rois.push_back(to_feature(droi));
                    sources.emplace_back(id);
                }
            }
            if (spec.spurious_detections && rng.coin(0.5)) {
                Detection junk;
                junk.class_label = spec.classes[rng.index(spec.classes.size())];
                junk.bbox = {std::floor(rng.uniform(0.0, 500.0)), std::floor(rng.uniform(0.0, 380.0)), 60.0, 60.0};
                junk.confidence = std::round(rng.uniform(0.01, 0.09) * 1000.0) / 1000.0;
                dets.push_back(junk);
                rois.push_back(to_feature(rng.gaussian(dim, 1.0)));
                sources.emplace_back(std::nullopt);
            }
            add_scaled(whole, rng.gaussian(dim, 1.0), spec.clutter);
            room.image_feature = to_feature(whole);
            room.detections = std::move(dets);
            room.roi_features = std::move(rois);
            out.detection_sources[room.id] = std::move(sources);
            corpus.rooms.emplace(room.id, std::move(room));
        }
    }

    // BoVW descriptors: each item owns a few private prototypes plus its
    // class prototypes; ROIs resample the item, whole images mix members
    // with clutter.
    if (spec.descriptor_dim > 0 && spec.descriptors_per_image > 0) {
        const std::size_t ddim = spec.descriptor_dim;
        std::vector<std::vector<std::vector<double>>> class_protos(spec.classes.size());
        for (auto& protos : class_protos) {
            for (int p = 0; p < 2; ++p) protos.push_back(rng.gaussian(ddim, 3.0));
        }
        std::map<ItemId, std::vector<std::vector<double>>> item_protos;
        for (const auto& [id, item] : corpus.items) {
            auto& protos = item_protos[id];
            for (int p = 0; p < 3; ++p) protos.push_back(rng.gaussian(ddim, 3.0));
            const auto cls = static_cast<std::size_t>(
                std::find(spec.classes.begin(), spec.classes.end(), item.class_label) - spec.classes.begin());
            for (const auto& p : class_protos[cls]) protos.push_back(p);
        }
        auto sample = [&](const ItemId& id, std::size_t count, std::vector<FeatureVector>& into) {
            const auto& protos = item_protos.at(id);
            for (std::size_t i = 0; i < count; ++i) {
                std::vector<double> d = protos[rng.index(protos.size())];
                add_scaled(d, rng.gaussian(ddim, 1.0), 0.3);
                into.push_back(to_feature(d));
            }
        };
        const std::size_t per = spec.descriptors_per_image;
        for (const auto& [id, item] : corpus.items) sample(id, per, out.descriptors[*item.image_ref]);
        for (const auto& [rid, room] : corpus.rooms) {
            auto& whole = out.descriptors[*room.image_ref];
            const std::size_t share = std::max<std::size_t>(1, per / std::max<std::size_t>(1, room.ground_truth.size()));
            for (const auto& id : room.ground_truth) sample(id, share, whole);
            for (std::size_t i = 0; i < per / 2; ++i) whole.push_back(to_feature(rng.gaussian(ddim, 3.0)));
            const auto& sources = out.detection_sources.at(rid);
            for (std::size_t row = 0; row < sources.size(); ++row) {
                auto& roi = out.descriptors[roi_image_ref(*room.image_ref, row)];
                if (sources[row]) {
                    sample(*sources[row], per, roi);
                } else {
                    for (std::size_t i = 0; i < per; ++i) roi.push_back(to_feature(rng.gaussian(ddim, 3.0)));
                }
            }
        }
    }
    return out;
}

}  // namespace stylesearch
