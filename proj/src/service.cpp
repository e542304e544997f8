#include "stylesearch/service.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <set>

#include <httplib.h>

#include "stylesearch/blend.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/simd/kernels.hpp"

namespace stylesearch::service {

using nlohmann::json;

namespace {

constexpr std::size_t kDefaultK = 6;
constexpr std::size_t kMaxK = 100;

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::not_found:
        case ErrorCode::dangling_reference: return 404;
        case ErrorCode::all_oov:
        case ErrorCode::degenerate: return 422;
        case ErrorCode::io: return 500;
        default: return 400;
    }
}

std::string media_url(const std::optional<std::string>& ref) { return ref ? "/media/" + *ref : std::string(); }

json nullable(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

json bbox_json(const BBox& b) { return {{"x", b.x}, {"y", b.y}, {"width", b.width}, {"height", b.height}}; }

json detection_json(const Detection& d, std::size_t row) {
    return {{"row", row}, {"class", d.class_label}, {"bbox", bbox_json(d.bbox)}, {"confidence", d.confidence}};
}

json entry_json(const State& state, const RankedEntry& e) {
    if (!std::isfinite(e.score)) throw Error(ErrorCode::degenerate, "non-finite score for item " + e.id);
    json j{{"id", e.id}, {"score", e.score}, {"modality", modality_name(e.modality)}};
    auto it = state.corpus.items.find(e.id);
    if (it != state.corpus.items.end()) {
        j["name"] = it->second.name;
        j["class"] = it->second.class_label;
        j["image"] = it->second.image_ref ? json(media_url(it->second.image_ref)) : json(nullptr);
    } else {
        j["name"] = nullptr;
        j["class"] = nullptr;
        j["image"] = nullptr;
    }
    return j;
}

std::size_t parse_k(const json& request) {
    if (!request.contains("k")) return kDefaultK;
    const auto& k = request["k"];
    if (!k.is_number_integer()) throw Error(ErrorCode::validation, "k must be an integer");
    const auto v = k.get<long long>();
    if (v < 1 || v > static_cast<long long>(kMaxK)) {
        throw Error(ErrorCode::validation, "k must be in [1, 100], got " + std::to_string(v));
    }
    return static_cast<std::size_t>(v);
}

std::vector<Detection> bundle_detections(const json& dets) {
    if (dets.is_string()) return detect::parse_detections(dets.get<std::string>(), "bundle");
    if (!dets.is_array()) throw Error(ErrorCode::validation, "bundle.detections must be an array or detection rows");
    std::vector<Detection> out;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const auto& d = dets[i];
        try {
            Detection det;
            det.class_label = d.at("class").get<std::string>();
            if (d.contains("bbox")) {
                const auto& b = d["bbox"];
                det.bbox = b.is_array() ? BBox{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                                               b.at(3).get<double>()}
                                        : BBox{b.at("x").get<double>(), b.at("y").get<double>(),
                                               b.at("width").get<double>(), b.at("height").get<double>()};
            } else {
                det.bbox = {d.at("x").get<double>(), d.at("y").get<double>(), d.at("width").get<double>(),
                            d.at("height").get<double>()};
            }
            det.confidence = d.at("confidence").get<double>();
            detect::validate(det, "bundle detection " + std::to_string(i));
            out.push_back(std::move(det));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::validation, "bundle detection " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::vector<FeatureVector> bundle_features(const json& feats) {
    if (!feats.is_array()) throw Error(ErrorCode::validation, "bundle.roi_features must be an array of vectors");
    std::vector<FeatureVector> out;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        try {
            out.emplace_back(feats[i].get<std::vector<float>>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::validation, "bundle roi_features[" + std::to_string(i) + "]: " + e.what());
        }
    }
    return out;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
};

Response search_impl(const State& state, const json& request) {
    const Timer total;
    if (!request.is_object()) throw Error(ErrorCode::validation, "request body must be a JSON object");
    const std::size_t k = parse_k(request);
    const blend::Strategy strategy = blend::parse_strategy(request.value("strategy", std::string("simple")));

    std::optional<std::string> class_filter;
    if (request.contains("class_filter") && !request["class_filter"].is_null()) {
        class_filter = request["class_filter"].get<std::string>();
        if (!state.index.has_class(*class_filter)) {
            throw Error(ErrorCode::validation, "class_filter: no indexed items of class '" + *class_filter + "'");
        }
    }

    const bool has_room = request.contains("room_id") && !request["room_id"].is_null();
    const bool has_bundle = request.contains("bundle") && !request["bundle"].is_null();
    const bool has_text = request.contains("text") && !request["text"].is_null();
    if (has_room && has_bundle) throw Error(ErrorCode::validation, "give either room_id or bundle, not both");
    if (!has_room && !has_bundle && !has_text) {
        throw Error(ErrorCode::validation, "request needs room_id, bundle or text");
    }

    json response;
    response["k"] = k;
    response["strategy"] = blend::strategy_name(strategy);
    response["room_id"] = has_room ? request["room_id"] : json(nullptr);
    json notices = json::array();
    json timing = json::object();

    // Text modality.
    RankedList text_results;
    if (has_text) {
        if (!request["text"].is_string()) throw Error(ErrorCode::validation, "text must be a string");
        if (!state.has_text()) throw Error(ErrorCode::validation, "text search is not available: no encoder loaded");
        const Timer t;
        const std::string query = request["text"].get<std::string>();
        const Tokens tokens = tokenize(query);
        if (tokens.empty()) throw Error(ErrorCode::validation, "text query has no tokens");
        const auto report = text::oov_report(*state.words, tokens);
        json diag = json::array();
        bool any_known = false;
        for (std::size_t i = 0; i < report.tokens.size(); ++i) {
            diag.push_back({{"token", report.tokens[i]}, {"in_vocabulary", static_cast<bool>(report.in_vocabulary[i])}});
            any_known = any_known || report.in_vocabulary[i];
        }
        if (!any_known) {
            return error_response(422, "all_oov", "no token of the text query is in the word-vector vocabulary",
                                  {{"tokens", diag}});
        }
        text_results = text::text_search(*state.encoder, *state.words, *state.style_index, tokens, k);
        response["text"] = {{"query", query}, {"tokens", diag}};
        timing["text"] = t.ms();
    } else {
        response["text"] = nullptr;
    }

    // Visual queries, one per kept detection.
    struct VisualGroup {
        std::optional<detect::RoiQuery> roi;
        FeatureVector feature;
        RankedList results;
        bool class_fallback = false;
        std::string source;
    };
    std::vector<VisualGroup> groups;
    if (has_room || has_bundle) {
        const Timer t;
        std::vector<Detection> dets;
        std::vector<FeatureVector> feats;
        std::optional<FeatureVector> whole;
        std::string query_id = "bundle";
        if (has_room) {
            if (!request["room_id"].is_string()) throw Error(ErrorCode::validation, "room_id must be a string");
            query_id = request["room_id"].get<std::string>();
            const Room& room = state.corpus.room(query_id);
            if (room.detections) {
                dets = *room.detections;
                feats = room.roi_features;
            }
            whole = room.image_feature;
        } else {
            const auto& b = request["bundle"];
            if (!b.is_object()) throw Error(ErrorCode::validation, "bundle must be an object");
            dets = bundle_detections(b.value("detections", json::array()));
            feats = bundle_features(b.value("roi_features", json::array()));
            if (feats.size() != dets.size()) {
                throw Error(ErrorCode::validation, "bundle has " + std::to_string(dets.size()) + " detections but " +
                                                       std::to_string(feats.size()) + " ROI features");
            }
            if (b.contains("image_feature") && !b["image_feature"].is_null()) {
                whole = FeatureVector(b["image_feature"].get<std::vector<float>>());
            }
        }
        const auto rois = detect::make_roi_queries(query_id, dets, feats, state.detection);
        timing["detect"] = t.ms();
        const Timer tv;
        for (const auto& roi : rois) {
            VisualGroup g{roi, roi.feature, {}, false, "detection"};
            if (class_filter) {
                g.results = state.index.knn(roi.feature, k, class_filter);
            } else {
                auto r = detect::room_query({roi}, state.index, k).front();
                g.results = std::move(r.results);
                g.class_fallback = r.class_fallback;
                if (g.class_fallback) {
                    notices.push_back("class fallback: no indexed items of class '" + roi.detection.class_label +
                                      "', searched all classes for detection row " + std::to_string(roi.source_row));
                }
            }
            groups.push_back(std::move(g));
        }
        if (rois.empty()) {
            if (!dets.empty()) notices.push_back("no detection passed the confidence and overlap filter");
            if (whole) {
                notices.push_back("searched with the whole-image feature");
                groups.push_back({std::nullopt, *whole, state.index.knn(*whole, k, class_filter), false, "whole_image"});
            } else if (!has_text) {
                throw Error(ErrorCode::validation, "query " + query_id + " has no usable detections or image feature");
            } else {
                notices.push_back("no visual query available; text results only");
            }
        }
        timing["visual"] = tv.ms();
    }

    json out_groups = json::array();
    const Timer tb;
    if (groups.empty()) {
        json g{{"detection", nullptr}, {"source", "text"}, {"class_fallback", false}, {"results", json::array()}};
        for (const auto& e : text_results) g["results"].push_back(entry_json(state, e));
        out_groups.push_back(std::move(g));
    } else {
        const blend::FeatureLookup lookup = [&](const ItemId& id) { return state.index.vector_of(id); };
        for (const auto& g : groups) {
            RankedList results = g.results;
            if (has_text) {
                blend::Request req{g.results, text_results, g.feature, k, strategy};
                results = blend::run(req, lookup);
            }
            json jg{{"detection", g.roi ? detection_json(g.roi->detection, g.roi->source_row) : json(nullptr)},
                    {"source", g.source},
                    {"class_fallback", g.class_fallback},
                    {"results", json::array()}};
            for (const auto& e : results) jg["results"].push_back(entry_json(state, e));
            out_groups.push_back(std::move(jg));
        }
    }
    if (has_text) timing["blend"] = tb.ms();
    response["groups"] = std::move(out_groups);
    response["notices"] = std::move(notices);
    timing["total"] = total.ms();
    response["timing_ms"] = std::move(timing);
    return {200, std::move(response)};
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace

ServiceConfig ServiceConfig::defaults(const fs::path& root) {
    ServiceConfig c;
    c.root = root;
    c.index = root / "artifacts" / "visual.ssix";
    c.embeddings = root / "artifacts" / "embeddings.ssem";
    c.encoder = root / "artifacts" / "encoder.ssen";
    c.words = root / "words.txt";
    c.media_dir = root;
    c.reports_dir = root / "reports";
    return c;
}

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base) {
    try {
        const fs::path root = j.contains("root") ? resolve(base, j["root"].get<std::string>()) : base;
        ServiceConfig c = defaults(root);
        auto path_key = [&](const char* key, fs::path& dst) {
            if (j.contains(key)) dst = resolve(base, j[key].get<std::string>());
        };
        auto optional_key = [&](const char* key, std::optional<fs::path>& dst) {
            if (!j.contains(key)) return;
            if (j[key].is_null()) dst.reset();
            else dst = resolve(base, j[key].get<std::string>());
        };
        path_key("index", c.index);
        optional_key("embeddings", c.embeddings);
        optional_key("encoder", c.encoder);
        optional_key("words", c.words);
        path_key("media_dir", c.media_dir);
        path_key("reports_dir", c.reports_dir);
        if (j.contains("detection")) {
            const auto& d = j["detection"];
            c.detection.threshold = d.value("threshold", c.detection.threshold);
            c.detection.iou_threshold = d.value("iou", c.detection.iou_threshold);
            c.detection.per_class = d.value("per_class_nms", c.detection.per_class);
        }
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.extractor_command = j.value("extractor_command", c.extractor_command);
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, std::string("service config: ") + e.what());
    }
}

State load_state(const ServiceConfig& config) {
    auto require = [](const fs::path& p, const char* what) {
        if (!fs::exists(p)) throw Error(ErrorCode::io, std::string("missing ") + what + " artifact: " + p.string());
    };
    require(config.root / "corpus.json", "corpus");
    require(config.index, "visual index");
    State s;
    s.corpus = load_corpus(config.root);
    s.index = VectorIndex::load(config.index);
    s.detection = config.detection;
    s.fingerprints["corpus"] = binio::fingerprint(binio::read_file(config.root / "corpus.json"));
    s.fingerprints["index"] = binio::fingerprint(s.index.serialize());
    for (const auto& id : s.index.ids()) {
        if (!s.corpus.items.contains(id)) {
            throw Error(ErrorCode::dangling_reference, "index " + config.index.string() + " holds unknown item " + id);
        }
    }

    const int text_parts = config.embeddings.has_value() + config.encoder.has_value() + config.words.has_value();
    if (text_parts != 0 && text_parts != 3) {
        throw Error(ErrorCode::invalid_argument, "text search needs embeddings, encoder and words together");
    }
    if (text_parts == 3) {
        require(*config.embeddings, "style embedding");
        require(*config.encoder, "text encoder");
        require(*config.words, "word vector");
        s.embeddings = embed::EmbeddingTable::load(*config.embeddings);
        s.encoder = text::EncoderModel::load(*config.encoder);
        s.words = text::WordVectors::load(*config.words);
        if (s.encoder->in_dim != s.words->dim) {
            throw Error(ErrorCode::dimension_mismatch, "encoder " + config.encoder->string() + " expects " +
                                                           std::to_string(s.encoder->in_dim) + "-dim words, " +
                                                           config.words->string() + " has " + std::to_string(s.words->dim));
        }
        if (s.encoder->out_dim != s.embeddings->dim) {
            throw Error(ErrorCode::dimension_mismatch, "encoder " + config.encoder->string() + " outputs " +
                                                           std::to_string(s.encoder->out_dim) + " dims, embeddings " +
                                                           config.embeddings->string() + " have " +
                                                           std::to_string(s.embeddings->dim));
        }
        s.style_index = text::build_style_index(*s.embeddings);
        s.fingerprints["embeddings"] = binio::fingerprint(s.embeddings->serialize());
        s.fingerprints["encoder"] = binio::fingerprint(s.encoder->serialize());
        s.fingerprints["words"] = binio::fingerprint(s.words->to_text());
    }
    return s;
}

Response error_response(int status, const std::string& code, const std::string& message, json details) {
    json err = details.is_object() ? std::move(details) : json::object();
    err["code"] = code;
    err["message"] = message;
    return {status, {{"error", std::move(err)}}};
}

Response handle_search(const State& state, const json& request) {
    try {
        return search_impl(state, request);
    } catch (const Error& e) {
        return error_response(status_for(e.code()), std::string(error_code_name(e.code())), e.what());
    } catch (const json::exception& e) {
        return error_response(400, "validation", e.what());
    }
}

Response handle_health(const State& state) {
    return {200,
            {{"status", "ok"},
             {"fingerprints", state.fingerprints},
             {"items", state.corpus.items.size()},
             {"rooms", state.corpus.rooms.size()},
             {"indexed", state.index.size()},
             {"text_search", state.has_text()},
             {"simd", simd::level_name(simd::active_level())}}};
}

Response handle_rooms(const State& state) {
    json rooms = json::array();
    for (const auto& [id, r] : state.corpus.rooms) {
        rooms.push_back({{"id", id},
                         {"category", r.category},
                         {"image", r.image_ref ? json(media_url(r.image_ref)) : json(nullptr)},
                         {"items", r.ground_truth.size()},
                         {"detections", r.detections ? r.detections->size() : 0}});
    }
    return {200, {{"rooms", rooms}}};
}

Response handle_room(const State& state, const std::string& id) {
    auto it = state.corpus.rooms.find(id);
    if (it == state.corpus.rooms.end()) return error_response(404, "not_found", "unknown room " + id);
    const Room& r = it->second;
    json dets = json::array();
    if (r.detections) {
        const auto kept = detect::filter_indices(*r.detections, state.detection);
        const std::set<std::size_t> kept_set(kept.begin(), kept.end());
        for (std::size_t i = 0; i < r.detections->size(); ++i) {
            json d = detection_json((*r.detections)[i], i);
            d["kept"] = kept_set.contains(i);
            dets.push_back(std::move(d));
        }
    }
    return {200,
            {{"id", id},
             {"category", r.category},
             {"description", r.description},
             {"image", r.image_ref ? json(media_url(r.image_ref)) : json(nullptr)},
             {"image_ref", nullable(r.image_ref)},
             {"items", r.ground_truth},
             {"detections", dets}}};
}

Response handle_item(const State& state, const std::string& id) {
    auto it = state.corpus.items.find(id);
    if (it == state.corpus.items.end()) return error_response(404, "not_found", "unknown item " + id);
    const Item& item = it->second;
    return {200,
            {{"id", id},
             {"class", item.class_label},
             {"name", item.name},
             {"description", item.description},
             {"image", item.image_ref ? json(media_url(item.image_ref)) : json(nullptr)},
             {"indexed", state.index.find(id).has_value()}}};
}

Response handle_reports(const fs::path& reports_dir) {
    json reports = json::array();
    if (fs::is_directory(reports_dir)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(reports_dir)) {
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            json r{{"name", f.filename().string()}};
            try {
                r["report"] = json::parse(binio::read_file(f));
            } catch (const std::exception& e) {
                r["error"] = e.what();
            }
            reports.push_back(std::move(r));
        }
    }
    return {200, {{"reports", reports}}};
}

json run_extractor(const std::string& command, const fs::path& image) {
    if (command.empty()) throw Error(ErrorCode::invalid_argument, "no extractor_command configured");
    if (!fs::is_regular_file(image)) throw Error(ErrorCode::not_found, "upload not found: " + image.string());
    static std::atomic<unsigned> counter{0};
    const fs::path dir = fs::temp_directory_path() /
                         ("stylesearch-extract-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(dir);
    struct Cleanup {
        fs::path p;
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(p, ec);
        }
    } cleanup{dir};
    const std::string cmd = command + " " + shell_quote(image.string()) + " " + shell_quote(dir.string());
    if (const int rc = std::system(cmd.c_str()); rc != 0) {
        throw Error(ErrorCode::io, "extractor exited with status " + std::to_string(rc) + ": " + cmd);
    }
    const auto dets = detect::load_detections(dir / "detections.txt");
    const auto feats = vecfile::read(dir / "roi.fvec");
    json bundle{{"detections", json::array()}, {"roi_features", json::array()}};
    for (const auto& d : dets) {
        bundle["detections"].push_back({{"class", d.class_label},
                                        {"x", d.bbox.x},
                                        {"y", d.bbox.y},
                                        {"width", d.bbox.width},
                                        {"height", d.bbox.height},
                                        {"confidence", d.confidence}});
    }
    for (const auto& f : feats) bundle["roi_features"].push_back(f.values());
    return bundle;
}

// ---------------------------------------------------------------------------

struct Server::Impl {
    std::shared_ptr<const State> state;
    ServiceConfig config;
    httplib::Server http;

    static void send(httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    }

    void routes() {
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                  {"Access-Control-Allow-Headers", "Content-Type"}});
        http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        http.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, handle_health(*state)); });
        http.Get("/rooms", [this](const httplib::Request&, httplib::Response& res) { send(res, handle_rooms(*state)); });
        http.Get(R"(/rooms/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            send(res, handle_room(*state, req.matches[1]));
        });
        http.Get(R"(/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            send(res, handle_item(*state, req.matches[1]));
        });
        http.Get("/eval/reports", [this](const httplib::Request&, httplib::Response& res) {
            send(res, handle_reports(config.reports_dir));
        });
        http.Post("/search", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception& e) {
                send(res, error_response(400, "parse", std::string("request body is not JSON: ") + e.what()));
                return;
            }
            if (body.is_object() && body.contains("upload")) {
                try {
                    const std::string name = body["upload"].get<std::string>();
                    const fs::path rel = fs::path(name).lexically_normal();
                    if (rel.is_absolute() || (!rel.empty() && *rel.begin() == "..")) {
                        throw Error(ErrorCode::validation, "upload must be a path under the media directory");
                    }
                    body["bundle"] = run_extractor(config.extractor_command, config.media_dir / rel);
                    body.erase("upload");
                } catch (const Error& e) {
                    send(res, error_response(status_for(e.code()), std::string(error_code_name(e.code())), e.what()));
                    return;
                } catch (const json::exception& e) {
                    send(res, error_response(400, "validation", e.what()));
                    return;
                }
            }
            send(res, handle_search(*state, body));
        });
        if (fs::is_directory(config.media_dir)) http.set_mount_point("/media", config.media_dir.string());
        http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            const auto r = error_response(res.status, res.status == 404 ? "not_found" : "http",
                                          "no route for " + req.method + " " + req.path);
            res.set_content(r.body.dump(), "application/json");
            return httplib::Server::HandlerResponse::Handled;
        });
        http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string msg = "internal error";
            try {
                if (ep) std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                msg = e.what();
            } catch (...) {
            }
            send(res, error_response(500, "internal", msg));
        });
    }
};

Server::Server(std::shared_ptr<const State> state, ServiceConfig config) : impl_(std::make_unique<Impl>()) {
    impl_->state = std::move(state);
    impl_->config = std::move(config);
    impl_->routes();
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->http.bind_to_any_port(host);
        if (p < 0) throw Error(ErrorCode::io, "cannot bind " + host);
        return p;
    }
    if (!impl_->http.bind_to_port(host, port)) {
        throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

bool Server::listen() { return impl_->http.listen_after_bind(); }

void Server::stop() {
    if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

}  // namespace stylesearch::service
