// smerf: SD-map encoding, fusion, and lane-topology evaluation toolkit.
//
// Exit codes: 0 success, 2 usage error (unknown flag/subcommand, bad flag
// value, missing required flag), 1 anything else (IO failures name the path).

#include <algorithm>
#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smerf/checkpoint.hpp"
#include "smerf/config.hpp"
#include "smerf/encoding.hpp"
#include "smerf/errors.hpp"
#include "smerf/metrics.hpp"
#include "smerf/report.hpp"
#include "smerf/scene.hpp"
#include "smerf/sdmap.hpp"
#include "smerf/smrf_io.hpp"
#include "smerf/synth.hpp"
#include "smerf/toy.hpp"
#include "smerf/transformer.hpp"

namespace fs = std::filesystem;
using namespace smerf;

namespace {

std::string read_text(const std::string& path) {
    std::vector<uint8_t> bytes = io::read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

// Scene/prediction files in a directory, sorted by name; manifests and logs
// are not data.
std::vector<std::string> list_json_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        std::string name = entry.path().filename().string();
        if (name == "manifest.json" || name.ends_with(".manifest.json") ||
            name.ends_with(".log.json"))
            continue;
        out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ev::Scene> load_scene_dir(const std::string& dir,
                                      std::vector<std::string>* names = nullptr) {
    std::vector<ev::Scene> scenes;
    for (const auto& path : list_json_files(dir)) {
        scenes.push_back(ev::load_scene(path));
        if (names != nullptr) names->push_back(path);
    }
    if (scenes.empty()) throw StructuralError("no scene files in " + dir);
    return scenes;
}

void write_text_output(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    io::atomic_write_file(out_path, text);
    std::cout << "wrote " << out_path << "\n";
}

// Converts a bad flag *value* into a usage error (exit 2).
template <typename F>
auto usage_checked(const std::string& flag, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError(flag, e.what());
    }
}

map::EgoPose parse_pose(const std::string& text) {
    map::EgoPose pose;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &pose.x, &pose.y, &pose.heading, &extra) !=
        3)
        throw CLI::ValidationError("--pose", "expected x,y,theta, got '" + text + "'");
    return pose;
}

double parse_tile_size(const std::string& text) {
    std::string t = text;
    if (t.ends_with("m")) t.pop_back();
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0' || !(v > 0.0))
        throw CLI::ValidationError("--tiles", "expected a positive size like 100m, got '" +
                                                   text + "'");
    return v;
}

bool provided(const CLI::Option* opt) { return opt != nullptr && opt->count() > 0; }

cfg::RunConfig base_config(const std::string& config_path) {
    if (config_path.empty()) {
        cfg::RunConfig c;
        c.propagate();
        return c;
    }
    return cfg::load_config(config_path);
}

// ---- ingest -----------------------------------------------------------------

struct IngestArgs {
    std::string config_path, input, format = "auto", out;
};

void run_ingest(const IngestArgs& a) {
    std::string text = read_text(a.input);
    map::SDMapTile tile;
    if (a.format == "osm")
        tile = map::parse_osm_xml(text);
    else if (a.format == "json")
        tile = map::parse_tile_json(text);
    else
        tile = map::parse_osm_extract(text);
    io::atomic_write_file(a.out, map::tile_to_json(tile));
    cfg::RunConfig c = base_config(a.config_path);
    cfg::write_manifest(a.out + ".manifest.json", c, {"ingest", {a.input}, {a.out}, {}});
    std::cout << "wrote " << a.out << " (" << tile.polylines.size() << " polylines)\n";
}

// ---- stats ------------------------------------------------------------------

struct StatsArgs {
    std::string input, out, svg;
};

void run_stats(const StatsArgs& a) {
    std::vector<std::string> files;
    if (fs::is_regular_file(a.input)) {
        files.push_back(a.input);
    } else if (fs::is_directory(a.input)) {
        for (const auto& entry : fs::directory_iterator(a.input)) {
            if (!entry.is_regular_file()) continue;
            auto ext = entry.path().extension();
            std::string name = entry.path().filename().string();
            if (name == "manifest.json" || name.ends_with(".manifest.json")) continue;
            if (ext == ".json" || ext == ".osm") files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
    } else {
        throw IoError("no such file or directory: " + a.input);
    }
    if (files.empty()) throw StructuralError("no map or scene files in " + a.input);

    std::deque<map::SDMapTile> tiles;       // stable addresses for the stats calls
    std::deque<ev::Scene> scenes;
    std::vector<std::pair<std::string, const map::SDMapTile*>> tile_groups;
    std::vector<std::pair<std::string, const map::LocalSDMap*>> local_groups;
    for (const auto& path : files) {
        std::string stem = fs::path(path).stem().string();
        std::string text = read_text(path);
        if (fs::path(path).extension() == ".osm") {
            tiles.push_back(map::parse_osm_xml(text));
            tile_groups.emplace_back(stem, &tiles.back());
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(text, nullptr, true);
        if (j.is_object() && j.contains("gt_lanes")) {
            scenes.push_back(ev::scene_from_json(text, path));
            local_groups.emplace_back(scenes.back().region_tile, &scenes.back().sd_map);
        } else {
            tiles.push_back(map::parse_tile_json(text));
            tile_groups.emplace_back(stem, &tiles.back());
        }
    }
    std::map<std::string, map::RoadTypeHistogram> merged = map::road_type_stats(tile_groups);
    for (const auto& [label, hist] : map::road_type_stats_local(local_groups)) {
        auto& dst = merged.try_emplace(label, map::RoadTypeHistogram{}).first->second;
        for (size_t i = 0; i < hist.size(); ++i) dst[i] += hist[i];
    }
    std::vector<std::pair<std::string, map::RoadTypeHistogram>> groups(merged.begin(),
                                                                       merged.end());
    write_text_output(a.out, report::render_histogram_markdown(groups));
    if (!a.svg.empty()) {
        io::atomic_write_file(a.svg, report::render_histogram_svg(groups));
        std::cout << "wrote " << a.svg << "\n";
    }
}

// ---- encode -----------------------------------------------------------------

struct EncodeArgs {
    std::string config_path, tile, pose_text, out;
};

void run_encode(const EncodeArgs& a) {
    cfg::RunConfig c = base_config(a.config_path);
    map::EgoPose pose = parse_pose(a.pose_text);
    map::SDMapTile tile = map::parse_osm_extract(read_text(a.tile));
    map::LocalSDMap local = map::query_local_map(tile, pose, c.bev_range);
    enc::PolylineSequenceTensor tensor = enc::build_sequence_tensor(local, c.encoding);
    io::save_tensor(a.out, io::from_sequence_tensor(tensor));
    cfg::write_manifest(a.out + ".manifest.json", c, {"encode", {a.tile}, {a.out}, {}});
    std::cout << "encoded " << tensor.rows << " polylines -> " << a.out << " ("
              << tensor.rows << "x" << tensor.cols << ")\n";
}

// ---- encode-features --------------------------------------------------------

struct EncodeFeaturesArgs {
    std::string config_path, weights, tensor, out, save_weights;
    uint64_t init_seed = 0;
    CLI::Option* weights_opt = nullptr;
    CLI::Option* init_seed_opt = nullptr;
};

void run_encode_features(const EncodeFeaturesArgs& a) {
    enc::PolylineSequenceTensor seq = io::to_sequence_tensor(io::load_tensor(a.tensor));
    nn::EncoderConfig ec;
    nn::EncoderWeights weights;
    if (provided(a.weights_opt)) {
        std::tie(ec, weights) = io::load_encoder_checkpoint(a.weights);
    } else if (provided(a.init_seed_opt)) {
        cfg::RunConfig c = base_config(a.config_path);
        ec = c.encoder;
        ec.input_width = seq.cols;
        usage_checked("--config", [&] { ec.validate(); });
        weights = nn::init_weights(ec, a.init_seed);
        if (!a.save_weights.empty()) {
            io::save_encoder_checkpoint(a.save_weights, ec, weights);
            std::cout << "wrote " << a.save_weights << "\n";
        }
    } else {
        throw CLI::ValidationError("--weights", "give --weights or --init-seed");
    }
    nn::MapFeatures features = nn::encode(seq, {}, weights, ec);
    io::save_tensor(a.out, io::from_matrix(features.data));
    cfg::RunConfig c = base_config(a.config_path);
    cfg::write_manifest(a.out + ".manifest.json", c,
                        {"encode-features", {a.tensor}, {a.out}, {}});
    std::cout << "encoded features " << features.data.rows() << "x" << features.data.cols()
              << " -> " << a.out << "\n";
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
    std::string config_path, layout, occlusion, out;
    int count = 0, lanes = 0, elements = 0, grid_rows = 0, grid_cols = 0;
    double noise = 0.0;
    uint64_t seed = 0;
    CLI::Option *layout_opt = nullptr, *occlusion_opt = nullptr, *count_opt = nullptr,
                *lanes_opt = nullptr, *elements_opt = nullptr, *grid_rows_opt = nullptr,
                *grid_cols_opt = nullptr, *noise_opt = nullptr, *seed_opt = nullptr;
};

void run_synth(const SynthArgs& a) {
    cfg::RunConfig c = base_config(a.config_path);
    if (provided(a.layout_opt))
        c.scene.layout = usage_checked("--layout", [&] { return synth::parse_layout(a.layout); });
    if (provided(a.occlusion_opt))
        c.scene.occlusion =
            usage_checked("--occlusion", [&] { return synth::parse_occlusion(a.occlusion); });
    if (provided(a.count_opt)) c.synth_count = a.count;
    if (provided(a.lanes_opt)) c.scene.lanes_per_road = a.lanes;
    if (provided(a.elements_opt)) c.scene.traffic_element_count = a.elements;
    if (provided(a.grid_rows_opt)) c.scene.grid_rows = a.grid_rows;
    if (provided(a.grid_cols_opt)) c.scene.grid_cols = a.grid_cols;
    if (provided(a.noise_opt)) c.scene.sd_noise_sigma = a.noise;
    if (provided(a.seed_opt)) c.seed = a.seed;
    c.propagate();
    c.validate();

    fs::create_directories(a.out);
    const int n = c.synth_count;
    const int threads = std::min(cfg::resolve_threads(c), std::max(n, 1));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
    auto worker = [&](int t) {
        try {
            for (int i = t; i < n; i += threads) {
                synth::SceneConfig sc = c.scene;
                sc.seed = c.seed + static_cast<uint64_t>(i);
                ev::Scene scene = synth::generate_scene(sc);
                char name[32];
                std::snprintf(name, sizeof(name), "scene_%05d.json", i);
                ev::save_scene((fs::path(a.out) / name).string(), scene);
            }
        } catch (...) {
            errors[static_cast<size_t>(t)] = std::current_exception();
        }
    };
    if (threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    cfg::write_manifest((fs::path(a.out) / "manifest.json").string(), c,
                        {"synth", {}, {a.out}, {c.seed}});
    std::cout << "wrote " << n << " scenes to " << a.out << "\n";
}

// ---- split ------------------------------------------------------------------

struct SplitArgs {
    std::string config_path, input, out, tiles_text;
    double val = 0.0;
    uint64_t seed = 0;
    CLI::Option *tiles_opt = nullptr, *val_opt = nullptr, *seed_opt = nullptr;
};

void run_split(const SplitArgs& a) {
    cfg::RunConfig c = base_config(a.config_path);
    if (provided(a.tiles_opt)) c.split_tile_size = parse_tile_size(a.tiles_text);
    if (provided(a.val_opt)) c.split_val_fraction = a.val;
    if (provided(a.seed_opt)) c.seed = a.seed;
    usage_checked("--val", [&] {
        if (!(c.split_val_fraction > 0.0 && c.split_val_fraction < 1.0))
            throw std::invalid_argument("val fraction must be in (0, 1)");
    });

    std::vector<std::string> names;
    std::vector<ev::Scene> scenes = load_scene_dir(a.input, &names);
    synth::SplitResult split =
        synth::split_geodisjoint(scenes, c.split_tile_size, c.split_val_fraction, c.seed);

    std::string out_dir = a.out.empty() ? a.input : a.out;
    fs::create_directories(out_dir);
    auto write_list = [&](const char* filename, const std::vector<int>& indices) {
        std::string text;
        for (int idx : indices)
            text += fs::path(names[static_cast<size_t>(idx)]).filename().string() + "\n";
        io::atomic_write_file((fs::path(out_dir) / filename).string(), text);
    };
    write_list("train.txt", split.train);
    write_list("val.txt", split.val);
    cfg::write_manifest((fs::path(out_dir) / "split.manifest.json").string(), c,
                        {"split", {a.input}, {out_dir}, {c.seed}});
    std::cout << "split " << scenes.size() << " scenes: " << split.train.size() << " train, "
              << split.val.size() << " val -> " << out_dir << "\n";
}

// ---- train-toy --------------------------------------------------------------

struct TrainToyArgs {
    std::string config_path, data, use_sd_map = "on", out, predict_data, predict_out;
    uint64_t seed = 0;
    int epochs = 0, width = 0, heads = 0, refine_layers = 0, lane_queries = 0,
        sd_encoder_layers = 0;
    double lr = 0.0;
    CLI::Option *seed_opt = nullptr, *epochs_opt = nullptr, *width_opt = nullptr,
                *heads_opt = nullptr, *refine_opt = nullptr, *queries_opt = nullptr,
                *sd_layers_opt = nullptr, *lr_opt = nullptr;
};

void apply_toy_overrides(cfg::RunConfig& c, const TrainToyArgs& a) {
    if (provided(a.seed_opt)) c.seed = a.seed;
    c.propagate();
    if (provided(a.epochs_opt)) c.toy.epochs = a.epochs;
    if (provided(a.width_opt)) c.toy.width = a.width;
    if (provided(a.heads_opt)) c.toy.heads = a.heads;
    if (provided(a.refine_opt)) c.toy.refine_layers = a.refine_layers;
    if (provided(a.queries_opt)) c.toy.lane_queries = a.lane_queries;
    if (provided(a.sd_layers_opt)) c.toy.sd_encoder_layers = a.sd_encoder_layers;
    if (provided(a.lr_opt)) c.toy.learning_rate = a.lr;
    c.toy.use_sd_map = a.use_sd_map == "on";
}

void run_train_toy(const TrainToyArgs& a) {
    cfg::RunConfig c = base_config(a.config_path);
    std::vector<ev::Scene> scenes = load_scene_dir(a.data);
    // the query grid is dictated by the data
    c.scene.grid_rows = scenes.front().evidence.rows;
    c.scene.grid_cols = scenes.front().evidence.cols;
    apply_toy_overrides(c, a);
    usage_checked("--config", [&] { c.toy.validate(); });

    std::vector<const ev::Scene*> dataset;
    dataset.reserve(scenes.size());
    for (const auto& s : scenes) dataset.push_back(&s);
    toy::TrainResult result = toy::train(dataset, c.toy);

    io::save_toy_checkpoint(a.out, result.model);
    nlohmann::json log = {{"epoch_loss", result.log.epoch_loss}};
    io::atomic_write_file(a.out + ".log.json", log.dump(2) + "\n");

    std::vector<std::string> outputs = {a.out};
    if (!a.predict_data.empty() || !a.predict_out.empty()) {
        if (a.predict_data.empty() || a.predict_out.empty())
            throw CLI::ValidationError("--predict-out",
                                       "--predict-data and --predict-out go together");
        std::vector<std::string> names;
        std::vector<ev::Scene> targets = load_scene_dir(a.predict_data, &names);
        fs::create_directories(a.predict_out);
        for (size_t i = 0; i < targets.size(); ++i) {
            ev::Prediction pred = toy::predict(result.model, targets[i]);
            std::string name = fs::path(names[i]).filename().string();
            ev::save_prediction((fs::path(a.predict_out) / name).string(), pred);
        }
        outputs.push_back(a.predict_out);
        std::cout << "wrote " << targets.size() << " predictions to " << a.predict_out << "\n";
    }
    cfg::write_manifest(a.out + ".manifest.json", c,
                        {"train-toy", {a.data}, outputs, {c.seed}});
    double final_loss = result.log.epoch_loss.empty() ? 0.0 : result.log.epoch_loss.back();
    std::cout << "trained " << c.toy.epochs << " epochs on " << scenes.size()
              << " scenes (use_sd_map=" << (c.toy.use_sd_map ? "on" : "off")
              << "), final loss " << final_loss << " -> " << a.out << "\n";
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string gt, pred, breakdown, report_fmt = "md", out;
};

void run_eval(const EvalArgs& a) {
    std::vector<std::string> gt_files = list_json_files(a.gt);
    if (gt_files.empty()) throw StructuralError("no scene files in " + a.gt);
    std::vector<ev::Scene> scenes;
    std::vector<ev::Prediction> preds;
    for (const auto& gt_path : gt_files) {
        std::string name = fs::path(gt_path).filename().string();
        std::string pred_path = (fs::path(a.pred) / name).string();
        if (!fs::is_regular_file(pred_path))
            throw IoError("missing prediction file: " + pred_path);
        scenes.push_back(ev::load_scene(gt_path));
        preds.push_back(ev::load_prediction(pred_path));
    }
    std::vector<const ev::Scene*> scene_ptrs;
    std::vector<const ev::Prediction*> pred_ptrs;
    for (size_t i = 0; i < scenes.size(); ++i) {
        scene_ptrs.push_back(&scenes[i]);
        pred_ptrs.push_back(&preds[i]);
    }
    ev::EvalReport report = ev::evaluate_set(scene_ptrs, pred_ptrs, {});
    if (!a.breakdown.empty()) {
        std::vector<std::string> keep =
            a.breakdown == "distance" ? std::vector<std::string>{"close", "far"}
                                      : std::vector<std::string>{"intersection",
                                                                 "non_intersection"};
        std::map<std::string, ev::EvalReport> filtered;
        for (const auto& key : keep)
            if (report.breakdowns.count(key)) filtered[key] = report.breakdowns.at(key);
        report.breakdowns = std::move(filtered);
    }
    if (a.report_fmt == "json") {
        write_text_output(a.out, ev::report_to_json(report).dump(2) + "\n");
    } else {
        std::string label = fs::path(a.pred).filename().string();
        if (label.empty()) label = a.pred;
        write_text_output(a.out, report::render_markdown({{label, report}}));
    }
}

// ---- ablate -----------------------------------------------------------------

struct AblateArgs {
    std::string config_path, data, report_path, tiles_text;
    int seeds = 5;
    double val = 0.0;
    TrainToyArgs toy;  // reuses the toy override plumbing (data/out unused);
                       // --seed comes from there and doubles as the base seed
    CLI::Option *tiles_opt = nullptr, *val_opt = nullptr;
};

void run_ablate(const AblateArgs& a) {
    cfg::RunConfig c = base_config(a.config_path);
    if (provided(a.tiles_opt)) c.split_tile_size = parse_tile_size(a.tiles_text);
    if (provided(a.val_opt)) c.split_val_fraction = a.val;
    if (a.seeds < 3) throw CLI::ValidationError("--seeds", "need at least 3 seeds");

    std::vector<ev::Scene> scenes = load_scene_dir(a.data);
    c.scene.grid_rows = scenes.front().evidence.rows;
    c.scene.grid_cols = scenes.front().evidence.cols;
    apply_toy_overrides(c, a.toy);
    usage_checked("--config", [&] { c.toy.validate(); });

    synth::SplitResult split =
        synth::split_geodisjoint(scenes, c.split_tile_size, c.split_val_fraction, c.seed);
    std::vector<const ev::Scene*> train_set, val_set;
    for (int idx : split.train) train_set.push_back(&scenes[static_cast<size_t>(idx)]);
    for (int idx : split.val) val_set.push_back(&scenes[static_cast<size_t>(idx)]);

    std::vector<uint64_t> seeds;
    for (int k = 0; k < a.seeds; ++k) seeds.push_back(c.seed + static_cast<uint64_t>(k));
    toy::AblationSummary summary = toy::compare_ablation(train_set, val_set, c.toy, seeds);

    io::atomic_write_file(a.report_path, report::render_ablation_markdown(summary));
    io::atomic_write_file(a.report_path + ".json",
                          report::ablation_to_json(summary).dump(2) + "\n");
    cfg::write_manifest(a.report_path + ".manifest.json", c,
                        {"ablate", {a.data}, {a.report_path, a.report_path + ".json"}, seeds});
    std::cout << "wrote " << a.report_path << " (" << train_set.size() << " train / "
              << val_set.size() << " val scenes)\n";
    std::cout << "fused wins far-band DET_l on " << summary.fused_far_wins << "/"
              << summary.runs.size() << " seeds; mean "
              << report::delta_percent(summary.mean_far_det_l_camera,
                                       summary.mean_far_det_l_fused)
              << " (" << summary.mean_far_det_l_camera << " -> "
              << summary.mean_far_det_l_fused << ")\n";
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string format = "md", out, svg;
};

void run_report(const ReportArgs& a) {
    report::LabeledReports rows;
    for (const auto& path : a.inputs) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw StructuralError(path + ": " + e.what());
        }
        rows.emplace_back(fs::path(path).stem().string(), ev::report_from_json(j));
    }
    write_text_output(a.out,
                      a.format == "csv" ? report::render_csv(rows)
                                        : report::render_markdown(rows));
    if (!a.svg.empty()) {
        io::atomic_write_file(a.svg, report::render_metric_bars_svg(rows));
        std::cout << "wrote " << a.svg << "\n";
    }
}

void add_toy_flags(CLI::App* cmd, TrainToyArgs& t) {
    t.seed_opt = cmd->add_option("--seed", t.seed, "training seed (default from config)");
    t.epochs_opt = cmd->add_option("--epochs", t.epochs, "training epochs");
    t.lr_opt = cmd->add_option("--lr", t.lr, "learning rate");
    t.width_opt = cmd->add_option("--width", t.width, "model width H");
    t.heads_opt = cmd->add_option("--heads", t.heads, "attention heads");
    t.refine_opt = cmd->add_option("--refine-layers", t.refine_layers, "BEV refine layers");
    t.queries_opt = cmd->add_option("--lane-queries", t.lane_queries, "lane query count");
    t.sd_layers_opt =
        cmd->add_option("--sd-encoder-layers", t.sd_encoder_layers, "SD encoder layers");
    cmd->add_option("--use-sd-map", t.use_sd_map, "fuse the SD map branch")
        ->check(CLI::IsMember({"on", "off"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SD-map encoding, fusion, and lane-topology evaluation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", cfg::kToolkitVersion);

    auto ingest = std::make_shared<IngestArgs>();
    {
        CLI::App* cmd = app.add_subcommand("ingest", "Parse an OSM extract into a map tile");
        cmd->add_option("--config", ingest->config_path, "JSON run config");
        cmd->add_option("--input", ingest->input, "OSM XML or tile JSON file")->required();
        cmd->add_option("--format", ingest->format, "input format (default: sniff)")
            ->check(CLI::IsMember({"auto", "osm", "json"}));
        cmd->add_option("--out", ingest->out, "output tile JSON")->required();
        cmd->callback([ingest] { run_ingest(*ingest); });
    }

    auto stats = std::make_shared<StatsArgs>();
    {
        CLI::App* cmd =
            app.add_subcommand("stats", "Road-type histogram over tiles or scenes");
        cmd->add_option("--input", stats->input, "tile/scene file or directory")->required();
        cmd->add_option("--out", stats->out, "markdown output (default: stdout)");
        cmd->add_option("--svg", stats->svg, "also write an SVG histogram");
        cmd->callback([stats] { run_stats(*stats); });
    }

    auto encode = std::make_shared<EncodeArgs>();
    {
        CLI::App* cmd = app.add_subcommand(
            "encode", "Query a tile around a pose and build the polyline tensor");
        cmd->add_option("--config", encode->config_path, "JSON run config");
        cmd->add_option("--tile", encode->tile, "map tile (JSON or OSM)")->required();
        cmd->add_option("--pose", encode->pose_text, "ego pose x,y,theta")->required();
        cmd->add_option("--out", encode->out, "output .smrf tensor")->required();
        cmd->callback([encode] { run_encode(*encode); });
    }

    auto encf = std::make_shared<EncodeFeaturesArgs>();
    {
        CLI::App* cmd = app.add_subcommand(
            "encode-features", "Run the map encoder over a polyline tensor");
        cmd->add_option("--config", encf->config_path, "JSON run config");
        encf->weights_opt = cmd->add_option("--weights", encf->weights, "encoder checkpoint");
        cmd->add_option("--tensor", encf->tensor, "input .smrf tensor")->required();
        cmd->add_option("--out", encf->out, "output .smrf features")->required();
        encf->init_seed_opt = cmd->add_option("--init-seed", encf->init_seed,
                                              "initialize fresh weights from this seed");
        cmd->add_option("--save-weights", encf->save_weights,
                        "write the initialized weights as a checkpoint");
        cmd->callback([encf] { run_encode_features(*encf); });
    }

    auto synth = std::make_shared<SynthArgs>();
    {
        CLI::App* cmd = app.add_subcommand("synth", "Generate synthetic scenes");
        cmd->add_option("--config", synth->config_path, "JSON run config");
        synth->layout_opt = cmd->add_option("--layout", synth->layout, "straight|curve|t|4way");
        synth->count_opt = cmd->add_option("--count", synth->count, "number of scenes");
        synth->seed_opt = cmd->add_option("--seed", synth->seed, "base seed");
        synth->lanes_opt = cmd->add_option("--lanes", synth->lanes, "lanes per road (1-4)");
        synth->noise_opt = cmd->add_option("--noise", synth->noise, "SD-map noise sigma (m)");
        synth->occlusion_opt = cmd->add_option("--occlusion", synth->occlusion,
                                               "none|building_box|range_limit:<m>");
        synth->elements_opt =
            cmd->add_option("--elements", synth->elements, "traffic elements per scene");
        synth->grid_rows_opt = cmd->add_option("--grid-rows", synth->grid_rows, "evidence rows");
        synth->grid_cols_opt = cmd->add_option("--grid-cols", synth->grid_cols, "evidence cols");
        cmd->add_option("--out", synth->out, "output scene directory")->required();
        cmd->callback([synth] { run_synth(*synth); });
    }

    auto split = std::make_shared<SplitArgs>();
    {
        CLI::App* cmd =
            app.add_subcommand("split", "Geo-disjoint train/val split of a scene directory");
        cmd->add_option("--config", split->config_path, "JSON run config");
        cmd->add_option("--input", split->input, "scene directory")->required();
        split->tiles_opt =
            cmd->add_option("--tiles", split->tiles_text, "geo tile size, e.g. 100m");
        split->val_opt = cmd->add_option("--val", split->val, "validation fraction (0,1)");
        split->seed_opt = cmd->add_option("--seed", split->seed, "split seed");
        cmd->add_option("--out", split->out, "output directory (default: --input)");
        cmd->callback([split] { run_split(*split); });
    }

    auto train = std::make_shared<TrainToyArgs>();
    {
        CLI::App* cmd = app.add_subcommand("train-toy", "Train the desk-scale lane model");
        cmd->add_option("--config", train->config_path, "JSON run config");
        cmd->add_option("--data", train->data, "training scene directory")->required();
        cmd->add_option("--out", train->out, "output checkpoint")->required();
        add_toy_flags(cmd, *train);
        cmd->add_option("--predict-data", train->predict_data,
                        "scenes to run inference on after training");
        cmd->add_option("--predict-out", train->predict_out,
                        "directory for the prediction files");
        cmd->callback([train] { run_train_toy(*train); });
    }

    auto eval = std::make_shared<EvalArgs>();
    {
        CLI::App* cmd =
            app.add_subcommand("eval", "Evaluate predictions against ground-truth scenes");
        cmd->add_option("--gt", eval->gt, "ground-truth scene directory")->required();
        cmd->add_option("--pred", eval->pred, "prediction directory")->required();
        cmd->add_option("--breakdown", eval->breakdown,
                        "restrict breakdown tables to one axis")
            ->check(CLI::IsMember({"distance", "intersection"}));
        cmd->add_option("--report", eval->report_fmt, "output format")
            ->check(CLI::IsMember({"json", "md"}));
        cmd->add_option("--out", eval->out, "output file (default: stdout)");
        cmd->callback([eval] { run_eval(*eval); });
    }

    auto ablate = std::make_shared<AblateArgs>();
    {
        CLI::App* cmd = app.add_subcommand(
            "ablate", "Train fused and camera-only variants over several seeds");
        cmd->add_option("--config", ablate->config_path, "JSON run config");
        cmd->add_option("--data", ablate->data, "scene directory")->required();
        cmd->add_option("--seeds", ablate->seeds, "number of seeds (>= 3)");
        cmd->add_option("--report", ablate->report_path, "markdown report path")->required();
        ablate->tiles_opt =
            cmd->add_option("--tiles", ablate->tiles_text, "geo tile size, e.g. 100m");
        ablate->val_opt = cmd->add_option("--val", ablate->val, "validation fraction");
        add_toy_flags(cmd, ablate->toy);
        cmd->callback([ablate] { run_ablate(*ablate); });
    }

    auto rep = std::make_shared<ReportArgs>();
    {
        CLI::App* cmd = app.add_subcommand("report", "Render evaluation reports as tables");
        cmd->add_option("--input", rep->inputs, "evaluation report JSON files (first = base)")
            ->required()
            ->expected(-1);
        cmd->add_option("--format", rep->format, "table format")
            ->check(CLI::IsMember({"md", "csv"}));
        cmd->add_option("--out", rep->out, "output file (default: stdout)");
        cmd->add_option("--svg", rep->svg, "also write a metric bar chart");
        cmd->callback([rep] { run_report(*rep); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
