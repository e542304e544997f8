#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "stylesearch/corpus.hpp"
#include "stylesearch/detect.hpp"
#include "stylesearch/query_encoder.hpp"
#include "stylesearch/style_embed.hpp"
#include "stylesearch/vecindex.hpp"

namespace stylesearch::service {

namespace fs = std::filesystem;

/// Artifact locations and server settings. A text artifact set to nullopt
/// disables the text modality.
struct ServiceConfig {
    fs::path root = ".";
    fs::path index;
    std::optional<fs::path> embeddings;
    std::optional<fs::path> encoder;
    std::optional<fs::path> words;
    detect::FilterConfig detection;
    std::string host = "127.0.0.1";
    int port = 8080;
    fs::path media_dir;
    fs::path reports_dir;
    /// Invoked as `<command> <image> <out_dir>`; must leave detections.txt
    /// and roi.fvec in out_dir.
    std::string extractor_command;

    /// Defaults laid out under `root`.
    static ServiceConfig defaults(const fs::path& root);
    /// Keys: root, index, embeddings, encoder, words, detection{threshold,
    /// iou, per_class_nms}, host, port, media_dir, reports_dir,
    /// extractor_command. Relative paths resolve against `base`.
    static ServiceConfig from_json(const nlohmann::json& j, const fs::path& base);
};

/// Everything a request reads. Immutable once loaded.
struct State {
    Corpus corpus;
    VectorIndex index;
    std::optional<embed::EmbeddingTable> embeddings;
    std::optional<text::EncoderModel> encoder;
    std::optional<text::WordVectors> words;
    std::optional<VectorIndex> style_index;
    detect::FilterConfig detection;
    std::map<std::string, std::string> fingerprints;

    bool has_text() const { return encoder && words && style_index; }
};

State load_state(const ServiceConfig& config);

struct Response {
    int status = 200;
    nlohmann::json body;
};

/// Error body: {"error": {"code", "message", ...details}}.
Response error_response(int status, const std::string& code, const std::string& message,
                        nlohmann::json details = nlohmann::json::object());

Response handle_search(const State& state, const nlohmann::json& request);
Response handle_health(const State& state);
Response handle_rooms(const State& state);
Response handle_room(const State& state, const std::string& id);
Response handle_item(const State& state, const std::string& id);
Response handle_reports(const fs::path& reports_dir);

/// Runs the external extractor on an uploaded image and returns the bundle
/// ({"detections": [...], "roi_features": [...]}).
nlohmann::json run_extractor(const std::string& command, const fs::path& image);

class Server {
public:
    Server(std::shared_ptr<const State> state, ServiceConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    bool listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace stylesearch::service
