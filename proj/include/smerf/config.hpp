#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "smerf/encoding.hpp"
#include "smerf/synth.hpp"
#include "smerf/toy.hpp"
#include "smerf/transformer.hpp"

namespace smerf::cfg {

inline constexpr const char* kToolkitVersion = "0.1.0";

// One declarative configuration for a run. Loaded from a single JSON file
// (partial files permitted, unknown keys rejected), then overridden by CLI
// flags. `propagate()` pushes the shared window into every sub-config and
// derives dependent widths; call it after any mutation.
struct RunConfig {
    uint64_t seed = 7;
    int threads = 1;  // worker count; the SMERF_THREADS env var overrides
    map::BevRange bev_range;

    enc::EncodingConfig encoding;
    nn::EncoderConfig encoder;  // standalone map encoder (encode-features)

    synth::SceneConfig scene;
    int synth_count = 200;

    double split_tile_size = 100.0;
    double split_val_fraction = 0.3;

    toy::ToyModelConfig toy;

    void propagate();
    void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);
// Starts from defaults; missing keys keep them, unknown keys throw
// StructuralError. Propagates before returning.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

uint64_t fnv1a64(const void* data, size_t size);
uint64_t fnv1a64(const std::string& s);

// Hash of the effective (propagated) configuration; identical iff every
// effective parameter is identical.
uint64_t config_hash(const RunConfig& cfg);
std::string config_hash_hex(const RunConfig& cfg);

// SMERF_THREADS (when set and >= 1) wins over the configured value.
int resolve_threads(const RunConfig& cfg);

struct ManifestInfo {
    std::string command;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<uint64_t> seeds;
};

// Writes `<path>` atomically: command, seeds, inputs/outputs, toolkit
// version, the effective config and its hash.
void write_manifest(const std::string& path, const RunConfig& cfg, const ManifestInfo& info);

}  // namespace smerf::cfg
