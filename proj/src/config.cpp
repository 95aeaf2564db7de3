#include "smerf/config.hpp"

#include <cstdio>
#include <cstdlib>

#include "smerf/errors.hpp"
#include "smerf/smrf_io.hpp"

namespace smerf::cfg {

namespace {

void check_keys(const nlohmann::json& j, const char* where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw StructuralError(std::string(where) + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known) throw StructuralError(std::string("unknown config key ") + where + "." + key);
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

nlohmann::json bev_to_json(const map::BevRange& r) {
    return {{"forward", r.forward}, {"backward", r.backward}, {"left", r.left},
            {"right", r.right}};
}

void bev_from_json(const nlohmann::json& j, map::BevRange& r) {
    check_keys(j, "bev_range", {"forward", "backward", "left", "right"});
    read(j, "forward", r.forward);
    read(j, "backward", r.backward);
    read(j, "left", r.left);
    read(j, "right", r.right);
}

}  // namespace

void RunConfig::propagate() {
    encoding.bev_range = bev_range;
    encoder.input_width = encoding.row_width();
    scene.bev_range = bev_range;
    scene.seed = seed;
    toy.bev_range = bev_range;
    toy.encoding = encoding;
    toy.grid_rows = scene.grid_rows;
    toy.grid_cols = scene.grid_cols;
    toy.seed = seed;
}

void RunConfig::validate() const {
    encoding.validate();
    encoder.validate();
    scene.validate();
    toy.validate();
    if (synth_count < 0) throw StructuralError("synth count must be >= 0");
    if (split_tile_size <= 0.0) throw StructuralError("split tile size must be positive");
    if (!(split_val_fraction > 0.0 && split_val_fraction < 1.0))
        throw StructuralError("split val fraction must be in (0, 1)");
    if (threads < 1) throw StructuralError("threads must be >= 1");
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["bev_range"] = bev_to_json(cfg.bev_range);
    j["encoding"] = {{"points_per_polyline", cfg.encoding.points_per_polyline},
                     {"embed_dim", cfg.encoding.embed_dim},
                     {"temperature", cfg.encoding.temperature},
                     {"road_type_dim", cfg.encoding.road_type_dim}};
    j["encoder"] = {{"layers", cfg.encoder.layers},
                    {"width", cfg.encoder.width},
                    {"heads", cfg.encoder.heads},
                    {"ffn_width", cfg.encoder.ffn_width}};
    j["synth"] = {{"layout", synth::layout_name(cfg.scene.layout)},
                  {"lanes_per_road", cfg.scene.lanes_per_road},
                  {"sd_noise_sigma", cfg.scene.sd_noise_sigma},
                  {"occlusion", synth::occlusion_name(cfg.scene.occlusion)},
                  {"traffic_element_count", cfg.scene.traffic_element_count},
                  {"grid_rows", cfg.scene.grid_rows},
                  {"grid_cols", cfg.scene.grid_cols},
                  {"count", cfg.synth_count}};
    j["split"] = {{"tile_size_meters", cfg.split_tile_size},
                  {"val_fraction", cfg.split_val_fraction}};
    j["toy"] = {{"width", cfg.toy.width},
                {"heads", cfg.toy.heads},
                {"refine_layers", cfg.toy.refine_layers},
                {"lane_queries", cfg.toy.lane_queries},
                {"use_sd_map", cfg.toy.use_sd_map},
                {"epochs", cfg.toy.epochs},
                {"learning_rate", cfg.toy.learning_rate},
                {"sd_encoder_layers", cfg.toy.sd_encoder_layers}};
    return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    check_keys(j, "config",
               {"seed", "threads", "bev_range", "encoding", "encoder", "synth", "split", "toy"});
    read(j, "seed", cfg.seed);
    read(j, "threads", cfg.threads);
    if (j.contains("bev_range")) bev_from_json(j.at("bev_range"), cfg.bev_range);
    if (j.contains("encoding")) {
        const auto& e = j.at("encoding");
        check_keys(e, "encoding",
                   {"points_per_polyline", "embed_dim", "temperature", "road_type_dim"});
        read(e, "points_per_polyline", cfg.encoding.points_per_polyline);
        read(e, "embed_dim", cfg.encoding.embed_dim);
        read(e, "temperature", cfg.encoding.temperature);
        read(e, "road_type_dim", cfg.encoding.road_type_dim);
    }
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        check_keys(e, "encoder", {"layers", "width", "heads", "ffn_width"});
        read(e, "layers", cfg.encoder.layers);
        read(e, "width", cfg.encoder.width);
        read(e, "heads", cfg.encoder.heads);
        read(e, "ffn_width", cfg.encoder.ffn_width);
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        check_keys(s, "synth",
                   {"layout", "lanes_per_road", "sd_noise_sigma", "occlusion",
                    "traffic_element_count", "grid_rows", "grid_cols", "count"});
        if (s.contains("layout")) cfg.scene.layout = synth::parse_layout(s.at("layout").get<std::string>());
        read(s, "lanes_per_road", cfg.scene.lanes_per_road);
        read(s, "sd_noise_sigma", cfg.scene.sd_noise_sigma);
        if (s.contains("occlusion"))
            cfg.scene.occlusion = synth::parse_occlusion(s.at("occlusion").get<std::string>());
        read(s, "traffic_element_count", cfg.scene.traffic_element_count);
        read(s, "grid_rows", cfg.scene.grid_rows);
        read(s, "grid_cols", cfg.scene.grid_cols);
        read(s, "count", cfg.synth_count);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        check_keys(s, "split", {"tile_size_meters", "val_fraction"});
        read(s, "tile_size_meters", cfg.split_tile_size);
        read(s, "val_fraction", cfg.split_val_fraction);
    }
    if (j.contains("toy")) {
        const auto& t = j.at("toy");
        check_keys(t, "toy",
                   {"width", "heads", "refine_layers", "lane_queries", "use_sd_map", "epochs",
                    "learning_rate", "sd_encoder_layers"});
        read(t, "width", cfg.toy.width);
        read(t, "heads", cfg.toy.heads);
        read(t, "refine_layers", cfg.toy.refine_layers);
        read(t, "lane_queries", cfg.toy.lane_queries);
        read(t, "use_sd_map", cfg.toy.use_sd_map);
        read(t, "epochs", cfg.toy.epochs);
        read(t, "learning_rate", cfg.toy.learning_rate);
        read(t, "sd_encoder_layers", cfg.toy.sd_encoder_layers);
    }
    cfg.propagate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::vector<uint8_t> bytes = io::read_file_bytes(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw StructuralError("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

uint64_t fnv1a64(const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

uint64_t config_hash(const RunConfig& cfg) {
    RunConfig effective = cfg;
    effective.propagate();
    return fnv1a64(config_to_json(effective).dump());
}

std::string config_hash_hex(const RunConfig& cfg) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    return buf;
}

int resolve_threads(const RunConfig& cfg) {
    if (const char* env = std::getenv("SMERF_THREADS")) {
        char* end = nullptr;
        long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n >= 1) return static_cast<int>(n);
    }
    return cfg.threads >= 1 ? cfg.threads : 1;
}

void write_manifest(const std::string& path, const RunConfig& cfg, const ManifestInfo& info) {
    RunConfig effective = cfg;
    effective.propagate();
    nlohmann::json j;
    j["command"] = info.command;
    j["version"] = kToolkitVersion;
    j["config"] = config_to_json(effective);
    j["config_hash"] = config_hash_hex(effective);
    j["seeds"] = info.seeds;
    j["inputs"] = info.inputs;
    j["outputs"] = info.outputs;
    io::atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace smerf::cfg
