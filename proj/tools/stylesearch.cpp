// stylesearch command-line front end.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "stylesearch/bovw.hpp"
#include "stylesearch/corpus.hpp"
#include "stylesearch/detect.hpp"
#include "stylesearch/error.hpp"
#include "stylesearch/eval.hpp"
#include "stylesearch/query_encoder.hpp"
#include "stylesearch/service.hpp"
#include "stylesearch/style_embed.hpp"
#include "stylesearch/vecindex.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stylesearch;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

json read_json(const fs::path& p) {
    try {
        return json::parse(binio::read_file(p));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, p.string() + ": " + e.what());
    }
}

template <class T>
T pick(const json& j, const char* section, const char* key, T fallback) {
    if (!j.contains(section) || !j[section].is_object()) return fallback;
    return j[section].value(key, fallback);
}

fs::path artifact(const fs::path& root, const char* name) { return root / "artifacts" / name; }

/// Items connected through shared rooms carry the same label.
std::map<ItemId, std::string> room_components(const Corpus& corpus) {
    std::map<ItemId, ItemId> parent;
    for (const auto& [id, _] : corpus.items) parent[id] = id;
    std::function<ItemId(const ItemId&)> find = [&](const ItemId& x) -> ItemId {
        if (parent[x] == x) return x;
        return parent[x] = find(parent[x]);
    };
    for (const auto& [_, room] : corpus.rooms) {
        if (room.ground_truth.empty()) continue;
        const ItemId first = find(*room.ground_truth.begin());
        for (const auto& id : room.ground_truth) parent[find(id)] = first;
    }
    std::map<ItemId, std::string> labels;
    for (const auto& [id, _] : corpus.items) labels[id] = find(id);
    return labels;
}

std::map<std::string, bovw::DescriptorSet> load_all_descriptors(const Corpus& corpus, const fs::path& dir) {
    std::map<std::string, bovw::DescriptorSet> out;
    auto add = [&](const std::string& ref) {
        if (!out.contains(ref)) out.emplace(ref, bovw::load_descriptors(dir, ref));
    };
    for (const auto& [_, item] : corpus.items) {
        if (item.image_ref) add(*item.image_ref);
    }
    for (const auto& [_, room] : corpus.rooms) {
        if (!room.image_ref) continue;
        add(*room.image_ref);
        if (room.detections) {
            for (std::size_t i = 0; i < room.detections->size(); ++i) add(roi_image_ref(*room.image_ref, i));
        }
    }
    return out;
}

detect::FilterConfig detection_config(const json& cfg) {
    detect::FilterConfig d;
    d.threshold = pick(cfg, "detection", "threshold", d.threshold);
    d.iou_threshold = pick(cfg, "detection", "iou", d.iou_threshold);
    d.per_class = pick(cfg, "detection", "per_class_nms", d.per_class);
    return d;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal interior-style retrieval engine"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    const char* env_root = std::getenv("STYLESEARCH_ROOT");
    std::string root = env_root ? env_root : ".";
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed_override, "Seed override for every seeded step");

    json cfg = json::object();
    std::map<CLI::App*, std::function<void()>> actions;
    std::vector<CLI::Option*> root_options;
    // Subcommand flag, then global --seed, then the config's "seed".
    auto seed_for = [&](const CLI::Option* local, std::uint64_t value) -> std::uint64_t {
        if (local->count() > 0) return value;
        if (seed_override) return *seed_override;
        return cfg.value("seed", value);
    };

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load and validate a corpus");
    bool check_only = false;
    root_options.push_back(ingest->add_option("--root", root, "Corpus root (default $STYLESEARCH_ROOT)"));
    ingest->add_flag("--check", check_only, "Validate only");
    actions[ingest] = ([&] {
        const Corpus c = load_corpus(root);
        if (check_only) {
            std::cout << "ok: " << c.items.size() << " items, " << c.rooms.size() << " rooms\n";
            return;
        }
        std::size_t with_feature = 0, with_embedding = 0, with_detections = 0;
        for (const auto& [_, item] : c.items) {
            with_feature += item.visual_feature.has_value();
            with_embedding += item.style_embedding.has_value();
        }
        for (const auto& [_, room] : c.rooms) with_detections += room.detections.has_value();
        const auto cooc = build_cooccurrence(c);
        json summary{{"items", c.items.size()},
                     {"rooms", c.rooms.size()},
                     {"items_with_visual_feature", with_feature},
                     {"items_with_style_embedding", with_embedding},
                     {"rooms_with_detections", with_detections},
                     {"max_pair_cooccurrence", cooc.max_pair_count()},
                     {"meta", c.meta}};
        std::cout << summary.dump(2) << "\n";
    });

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
    std::string spec_path, out_dir;
    std::uint64_t synth_seed = 7;
    std::size_t word_dim = 32;
    synth_cmd->add_option("--spec", spec_path, "SynthSpec JSON")->check(CLI::ExistingFile);
    auto* synth_seed_opt = synth_cmd->add_option("--seed", synth_seed, "Generator seed");
    synth_cmd->add_option("--out", out_dir, "Output directory")->required();
    synth_cmd->add_option("--word-dim", word_dim, "Dimension of the generated word vectors");
    actions[synth_cmd] = ([&] {
        const SynthSpec spec = spec_path.empty() ? SynthSpec{} : synth_spec_from_json(binio::read_file(spec_path));
        const std::uint64_t seed = seed_for(synth_seed_opt, synth_seed);
        const SynthResult r = synth(spec, seed);
        save_corpus(r.corpus, out_dir);
        const fs::path desc_dir = fs::path(out_dir) / "descriptors";
        for (const auto& [ref, rows] : r.descriptors) vecfile::write(bovw::descriptor_path(desc_dir, ref), rows);
        text::random_word_vectors(lexicon(), word_dim, seed).save(fs::path(out_dir) / "words.txt");
        std::cout << "wrote " << r.corpus.items.size() << " items, " << r.corpus.rooms.size() << " rooms to "
                  << out_dir << "\n";
    });

    // build-index
    auto* build = app.add_subcommand("build-index", "Build the visual kNN index");
    std::string index_out;
    bool per_class = false;
    root_options.push_back(build->add_option("--corpus", root, "Corpus root"));
    build->add_option("--out", index_out, "Index file (default <root>/artifacts/visual.ssix)");
    build->add_flag("--per-class", per_class, "Partition the index by item class");
    actions[build] = ([&] {
        const Corpus c = load_corpus(root);
        const VectorIndex index = build_index(c, per_class || cfg.value("per_class_index", false));
        const fs::path out = index_out.empty() ? artifact(root, "visual.ssix") : fs::path(index_out);
        index.save(out);
        std::cout << "indexed " << index.size() << " items (dim " << index.dim() << ", "
                  << (index.partitioned() ? "per-class" : "global") << ") -> " << out.string() << "\n";
    });

    // bovw
    auto* bovw_cmd = app.add_subcommand("bovw", "Bag-of-visual-words baseline");
    bovw_cmd->require_subcommand(1);
    std::string desc_dir, codebook_path;
    std::size_t bovw_k = 0;
    std::uint64_t bovw_seed = 1;
    auto* bovw_train = bovw_cmd->add_subcommand("train", "Cluster item descriptors into a codebook");
    root_options.push_back(bovw_train->add_option("--corpus", root, "Corpus root"));
    bovw_train->add_option("--descriptors", desc_dir, "Descriptor directory (default <root>/descriptors)");
    bovw_train->add_option("--k", bovw_k, "Visual words");
    auto* bovw_seed_opt = bovw_train->add_option("--seed", bovw_seed, "k-means seed");
    bovw_train->add_option("--out", codebook_path, "Codebook file");
    actions[bovw_train] = ([&] {
        const Corpus c = load_corpus(root);
        const fs::path dir = desc_dir.empty() ? fs::path(root) / "descriptors" : fs::path(desc_dir);
        std::vector<bovw::DescriptorSet> sets;
        for (const auto& [_, item] : c.items) {
            if (item.image_ref) sets.push_back(bovw::load_descriptors(dir, *item.image_ref));
        }
        bovw::TrainConfig tc;
        tc.k = bovw_k ? bovw_k : pick<std::size_t>(cfg, "bovw", "k", tc.k);
        tc.max_iters = pick<std::size_t>(cfg, "bovw", "max_iters", tc.max_iters);
        tc.tol = pick(cfg, "bovw", "tol", tc.tol);
        tc.seed = seed_for(bovw_seed_opt, bovw_seed);
        const auto cb = bovw::train_codebook(sets, tc);
        const fs::path out = codebook_path.empty() ? artifact(root, "codebook.sscb") : fs::path(codebook_path);
        cb.save(out);
        std::cout << "codebook k=" << cb.k << " after " << cb.iterations << " iterations, inertia "
                  << (cb.inertia_history.empty() ? 0.0 : cb.inertia_history.back()) << " -> " << out.string() << "\n";
    });
    auto* bovw_encode = bovw_cmd->add_subcommand("encode", "Index item histograms");
    std::string hist_out;
    root_options.push_back(bovw_encode->add_option("--corpus", root, "Corpus root"));
    bovw_encode->add_option("--descriptors", desc_dir, "Descriptor directory (default <root>/descriptors)");
    bovw_encode->add_option("--codebook", codebook_path, "Codebook file");
    bovw_encode->add_option("--out", hist_out, "Histogram index file");
    actions[bovw_encode] = ([&] {
        const Corpus c = load_corpus(root);
        const fs::path dir = desc_dir.empty() ? fs::path(root) / "descriptors" : fs::path(desc_dir);
        const auto cb =
            bovw::Codebook::load(codebook_path.empty() ? artifact(root, "codebook.sscb") : fs::path(codebook_path));
        std::map<std::string, bovw::Histogram> hists;
        for (const auto& [id, item] : c.items) {
            if (item.image_ref) hists[id] = bovw::quantize(bovw::load_descriptors(dir, *item.image_ref), cb);
        }
        std::vector<std::string> skipped;
        const VectorIndex index = bovw::build_histogram_index(hists, &skipped);
        const fs::path out = hist_out.empty() ? artifact(root, "bovw.ssix") : fs::path(hist_out);
        index.save(out);
        std::cout << "encoded " << index.size() << " items";
        if (!skipped.empty()) std::cout << " (" << skipped.size() << " with empty histograms skipped)";
        std::cout << " -> " << out.string() << "\n";
    });

    // train-embeddings
    auto* emb = app.add_subcommand("train-embeddings", "Train CBOW style embeddings from room co-occurrence");
    std::string emb_out;
    std::size_t emb_dim = 0, emb_epochs = 0;
    std::uint64_t emb_seed = 1;
    std::string labels_path;
    root_options.push_back(emb->add_option("--corpus", root, "Corpus root"));
    emb->add_option("--dim", emb_dim, "Embedding dimension");
    emb->add_option("--epochs", emb_epochs, "Epochs");
    auto* emb_seed_opt = emb->add_option("--seed", emb_seed, "Training seed");
    emb->add_option("--out", emb_out, "Embedding file");
    auto* report_opt = emb->add_option("--report-clusters", labels_path,
                                       "Print intra/inter cosine distance per label (JSON item->label map; "
                                       "without a file, items linked through rooms share a label)")
                           ->expected(0, 1);
    actions[emb] = ([&] {
        const Corpus c = load_corpus(root);
        embed::CbowConfig cc;
        cc.dim = emb_dim ? emb_dim : pick<std::size_t>(cfg, "embedding", "dim", cc.dim);
        cc.epochs = emb_epochs ? emb_epochs : pick<std::size_t>(cfg, "embedding", "epochs", cc.epochs);
        cc.learning_rate = pick(cfg, "embedding", "learning_rate", cc.learning_rate);
        cc.negatives = pick<std::size_t>(cfg, "embedding", "negatives", cc.negatives);
        cc.seed = seed_for(emb_seed_opt, emb_seed);
        std::vector<ItemId> vocab;
        for (const auto& [id, _] : c.items) vocab.push_back(id);
        const auto table = embed::train_cbow(embed::make_pairs(c), vocab, cc);
        const fs::path out = emb_out.empty() ? artifact(root, "embeddings.ssem") : fs::path(emb_out);
        table.save(out);
        std::cout << "trained " << table.vocab.size() << " embeddings (dim " << table.dim << ", " << cc.epochs
                  << " epochs, final loss " << (table.epoch_loss.empty() ? 0.0 : table.epoch_loss.back()) << ") -> "
                  << out.string() << "\n";
        if (report_opt->count() > 0) {
            std::map<ItemId, std::string> labels;
            if (labels_path.empty()) {
                labels = room_components(c);
            } else {
                for (const auto& [id, v] : read_json(labels_path).items()) labels[id] = v.is_string() ? v.get<std::string>() : v.dump();
            }
            const auto q = embed::cluster_quality(table, labels);
            std::cout << "intra " << q.intra << " inter " << q.inter << " separation " << (q.inter - q.intra) << "\n";
        }
    });

    // train-encoder
    auto* enc = app.add_subcommand("train-encoder", "Fit the text-query encoder to the style embeddings");
    std::string enc_out, emb_in, words_in, variant = "mean_affine", oov = "skip";
    std::uint64_t enc_seed = 1;
    std::size_t enc_epochs = 0;
    root_options.push_back(enc->add_option("--corpus", root, "Corpus root"));
    enc->add_option("--embeddings", emb_in, "Embedding file");
    enc->add_option("--words", words_in, "Word vectors (default <root>/words.txt)");
    enc->add_option("--variant", variant, "mean_affine or recurrent");
    enc->add_option("--oov", oov, "skip or zero");
    enc->add_option("--epochs", enc_epochs, "Epochs");
    auto* enc_seed_opt = enc->add_option("--seed", enc_seed, "Initialization and batching seed");
    enc->add_option("--out", enc_out, "Encoder file");
    actions[enc] = ([&] {
        const Corpus c = load_corpus(root);
        const auto table =
            embed::EmbeddingTable::load(emb_in.empty() ? artifact(root, "embeddings.ssem") : fs::path(emb_in));
        const auto words =
            text::WordVectors::load(words_in.empty() ? fs::path(root) / "words.txt" : fs::path(words_in));
        text::EncoderConfig ec;
        ec.variant = text::parse_variant(pick(cfg, "encoder", "variant", variant));
        const std::string oov_name = pick(cfg, "encoder", "oov", oov);
        if (oov_name == "skip") ec.oov_policy = text::OovPolicy::skip;
        else if (oov_name == "zero") ec.oov_policy = text::OovPolicy::zero;
        else throw Error(ErrorCode::invalid_argument, "unknown OOV policy '" + oov_name + "'");
        ec.hidden = pick<std::size_t>(cfg, "encoder", "hidden", ec.hidden);
        ec.epochs = enc_epochs ? enc_epochs : pick<std::size_t>(cfg, "encoder", "epochs", ec.epochs);
        ec.learning_rate = pick(cfg, "encoder", "learning_rate", ec.learning_rate);
        ec.batch_size = pick<std::size_t>(cfg, "encoder", "batch_size", ec.batch_size);
        ec.seed = seed_for(enc_seed_opt, enc_seed);
        const auto r = text::train_encoder(c, table, words, ec);
        const fs::path out = enc_out.empty() ? artifact(root, "encoder.ssen") : fs::path(enc_out);
        r.model.save(out);
        std::cout << text::variant_name(ec.variant) << " encoder on " << r.samples << " items: MSE " << r.initial_mse
                  << " -> " << r.final_mse << " (" << out.string() << ")\n";
    });

    // detect-filter
    auto* det = app.add_subcommand("detect-filter", "Apply the confidence threshold and overlap suppression");
    std::string det_in, det_out;
    double threshold = -1.0, iou = -1.0;
    bool per_class_nms = false;
    det->add_option("--in", det_in, "Detection file")->required()->check(CLI::ExistingFile);
    det->add_option("--out", det_out, "Filtered detection file (default stdout)");
    det->add_option("--threshold", threshold, "Minimum confidence (default 0.1)");
    det->add_option("--iou", iou, "Overlap above which the lower-confidence box is dropped (default 0.5)");
    det->add_flag("--per-class-nms", per_class_nms, "Only suppress overlaps within a class");
    actions[det] = ([&] {
        detect::FilterConfig fc = detection_config(cfg);
        if (threshold >= 0) fc.threshold = threshold;
        if (iou >= 0) fc.iou_threshold = iou;
        fc.per_class = fc.per_class || per_class_nms;
        const auto dets = detect::load_detections(det_in);
        const auto kept = detect::filter_detections(dets, fc);
        if (det_out.empty()) {
            for (const auto& d : kept) {
                std::string cls = d.class_label;
                std::replace(cls.begin(), cls.end(), ' ', '_');
                std::cout << cls << ' ' << d.bbox.x << ' ' << d.bbox.y << ' ' << d.bbox.width << ' ' << d.bbox.height
                          << ' ' << d.confidence << "\n";
            }
        } else {
            detect::save_detections(det_out, kept);
        }
        std::cerr << "kept " << kept.size() << " of " << dets.size() << " detections\n";
    });

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Run the retrieval and blending experiments");
    std::string exp_path, report_out, table_out, curves_out, ev_index, ev_emb, ev_enc, ev_words, ev_codebook;
    root_options.push_back(ev->add_option("--corpus", root, "Corpus root"));
    ev->add_option("--experiment", exp_path, "Experiment config JSON (default: the config's \"experiment\" key)")
        ->check(CLI::ExistingFile);
    ev->add_option("--index", ev_index, "Visual index");
    ev->add_option("--embeddings", ev_emb, "Embedding file");
    ev->add_option("--encoder", ev_enc, "Encoder file");
    ev->add_option("--words", ev_words, "Word vectors");
    ev->add_option("--codebook", ev_codebook, "BoVW codebook (enables the BoVW rows)");
    ev->add_option("--out", report_out, "Report JSON (default <root>/reports/report.json)");
    ev->add_option("--table", table_out, "Also write text tables ('-' for stdout)");
    ev->add_option("--curves", curves_out, "Also write recall curves as CSV");
    actions[ev] = ([&] {
        const Corpus c = load_corpus(root);
        eval::ExperimentConfig ec;
        if (!exp_path.empty()) ec = eval::ExperimentConfig::from_json(binio::read_file(exp_path));
        else if (cfg.contains("experiment")) ec = eval::ExperimentConfig::from_json(cfg["experiment"].dump());
        else if (!config_path.empty()) ec = eval::ExperimentConfig::from_json(cfg.dump());
        const fs::path index_path = ev_index.empty() ? artifact(root, "visual.ssix") : fs::path(ev_index);
        const fs::path emb_path = ev_emb.empty() ? artifact(root, "embeddings.ssem") : fs::path(ev_emb);
        const fs::path enc_path = ev_enc.empty() ? artifact(root, "encoder.ssen") : fs::path(ev_enc);
        const fs::path words_path = ev_words.empty() ? fs::path(root) / "words.txt" : fs::path(ev_words);

        const VectorIndex index = VectorIndex::load(index_path);
        std::optional<embed::EmbeddingTable> table;
        std::optional<text::EncoderModel> encoder;
        std::optional<text::WordVectors> words;
        if (fs::exists(emb_path) && fs::exists(enc_path) && fs::exists(words_path)) {
            table = embed::EmbeddingTable::load(emb_path);
            encoder = text::EncoderModel::load(enc_path);
            words = text::WordVectors::load(words_path);
        } else {
            std::cerr << "text artifacts missing; blending experiment skipped\n";
        }
        std::optional<bovw::Codebook> codebook;
        std::map<std::string, bovw::DescriptorSet> descriptors;
        if (!ev_codebook.empty()) ec.bovw = true;
        if (ec.bovw) {
            codebook = bovw::Codebook::load(ev_codebook.empty() ? artifact(root, "codebook.sscb") : fs::path(ev_codebook));
            descriptors = load_all_descriptors(c, fs::path(root) / "descriptors");
        }
        eval::ExperimentInputs in;
        in.corpus = &c;
        in.visual_index = &index;
        if (table) {
            in.embeddings = &*table;
            in.encoder = &*encoder;
            in.words = &*words;
        }
        if (codebook) {
            in.codebook = &*codebook;
            in.descriptors = &descriptors;
        }
        const auto report = eval::run_experiment(in, ec);
        const fs::path out = report_out.empty() ? fs::path(root) / "reports" / "report.json" : fs::path(report_out);
        binio::write_file(out, report.to_json());
        if (table_out == "-") std::cout << report.to_table();
        else if (!table_out.empty()) binio::write_file(table_out, report.to_table());
        if (!curves_out.empty()) binio::write_file(curves_out, report.curves_csv());
        std::cerr << "report -> " << out.string() << "\n";
    });

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP search service");
    std::string host;
    int port = -1;
    root_options.push_back(serve->add_option("--root", root, "Corpus root"));
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port (0 picks a free one)");
    actions[serve] = ([&] {
        service::ServiceConfig sc = cfg.empty() ? service::ServiceConfig::defaults(root) : [&] {
            json j = cfg;
            j["root"] = fs::absolute(root).string();
            return service::ServiceConfig::from_json(j, config_path.empty() ? fs::current_path()
                                                                            : fs::path(config_path).parent_path());
        }();
        if (!host.empty()) sc.host = host;
        if (port >= 0) sc.port = port;
        auto state = std::make_shared<const service::State>(service::load_state(sc));
        service::Server server(state, sc);
        const int bound = server.bind(sc.host, sc.port);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::thread watcher([&] {
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
        });
        std::cerr << "listening on http://" << sc.host << ":" << bound << "\n";
        server.listen();
        g_stop = true;
        watcher.join();
        std::cerr << "stopped\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        if (!config_path.empty()) cfg = read_json(config_path);
        const bool root_flag = std::any_of(root_options.begin(), root_options.end(),
                                           [](const CLI::Option* o) { return o->count() > 0; });
        if (!root_flag && cfg.contains("root")) {
            const fs::path r = cfg["root"].get<std::string>();
            root = (r.is_absolute() ? r : fs::path(config_path).parent_path() / r).string();
        }
        for (CLI::App* sub = app.get_subcommands().front();;) {
            if (auto it = actions.find(sub); it != actions.end()) {
                it->second();
                break;
            }
            if (sub->get_subcommands().empty()) break;
            sub = sub->get_subcommands().front();
        }
    } catch (const Error& e) {
        std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
