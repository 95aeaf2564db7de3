#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smerf/scene.hpp"

namespace smerf::synth {

enum class RoadLayout { kStraight, kCurve, kTee, kFourWay };

RoadLayout parse_layout(const std::string& name);  // "straight"|"curve"|"t"|"4way"
std::string layout_name(RoadLayout layout);

enum class OcclusionKind { kNone, kBuildingBox, kRangeLimit };

struct OcclusionSpec {
    OcclusionKind kind = OcclusionKind::kNone;
    double range_limit = 25.0;  // meters, for kRangeLimit
};

OcclusionSpec parse_occlusion(const std::string& text);  // "none"|"building_box"|"range_limit:25"
std::string occlusion_name(const OcclusionSpec& spec);

struct SceneConfig {
    uint64_t seed = 0;
    RoadLayout layout = RoadLayout::kStraight;
    int lanes_per_road = 1;  // 1..4
    double sd_noise_sigma = 0.0;
    OcclusionSpec occlusion;
    int traffic_element_count = 2;
    int grid_rows = 50;  // evidence grid; 2 m cells over the default window
    int grid_cols = 25;
    map::BevRange bev_range;

    void validate() const;
};

// Deterministic scene generator. Roads are laid across the full BEV window,
// their lanes cut into ~25 m 11-point segments chained by shared endpoints;
// junction layouts add turn/through connector lanes (flagged is_intersection)
// between arm endpoints. The SD map is the per-road skeleton, control points
// every ~10 m with per-axis Gaussian noise of sd_noise_sigma. Geometry jitter
// and noise come from separate seed substreams, so changing the noise level
// keeps the geometry fixed.
ev::Scene generate_scene(const SceneConfig& config);

struct SplitResult {
    std::vector<int> train;  // scene indices
    std::vector<int> val;
};

// Partitions geographic tiles (floor of the scenes' global anchors over a
// tile_size grid), never scenes, so no tile contributes to both sets. The
// validation tile count is round(val_fraction * tiles) clamped to
// [1, tiles - 1]. Throws StructuralError with fewer than 2 distinct tiles.
SplitResult split_geodisjoint(const std::vector<ev::Scene>& scenes, double tile_size_meters,
                              double val_fraction, uint64_t seed);

// Removes round(drop_fraction * M) SD polylines, chosen by seeded shuffle;
// ground truth untouched.
ev::Scene degrade_map(const ev::Scene& scene, double drop_fraction, uint64_t seed);

}  // namespace smerf::synth
