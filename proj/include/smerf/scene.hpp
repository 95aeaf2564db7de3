#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smerf/geometry.hpp"
#include "smerf/sdmap.hpp"

namespace smerf::ev {

// Directed lane centerline: 11 ordered ego-frame points; direction is the
// point order. `confidence` is meaningful for predictions only (GT carries 1).
struct LaneCenterline {
    std::vector<Vec3> points;
    double confidence = 1.0;
    int id = 0;
};

inline constexpr int kLanePointCount = 11;

// Allowed traffic-element categories (scene/prediction files reject others).
inline constexpr std::array<const char*, 4> kElementCategories = {
    "traffic_light", "stop_sign", "speed_limit", "other_sign"};

bool is_known_element_category(const std::string& name);

// Traffic light/sign as a categorized axis-aligned box in image pixels.
struct TrafficElement {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  // x0 < x1, y0 < y1
    std::string category;
    double confidence = 1.0;
    int id = 0;

    double area() const { return (x1 - x0) * (y1 - y0); }
};

double box_iou(const TrafficElement& a, const TrafficElement& b);

// Occlusion-masked BEV occupancy grid: rows scan x from the back of the BEV
// window to the front, cols scan y from the right edge to the left.
struct EvidenceGrid {
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> cells;  // row-major, {0,1}

    uint8_t at(int r, int c) const { return cells[static_cast<size_t>(r) * cols + c]; }
    uint8_t& at(int r, int c) { return cells[static_cast<size_t>(r) * cols + c]; }
};

// One evaluation scene: ground truth in the ego frame plus the SD-map prior
// and the visible-evidence grid consumed by the toy pipeline.
struct Scene {
    map::EgoPose ego_pose;                 // global pose of the ego frame
    std::string region_tile;               // geographic tile id of the anchor
    Vec2 region_anchor;                    // global meters, for geo splits

    std::vector<LaneCenterline> gt_lanes;  // 11 points each
    std::vector<uint8_t> is_intersection;  // per lane
    std::vector<TrafficElement> gt_elements;
    Eigen::MatrixXd ll_affinity;           // lanes x lanes, binary
    Eigen::MatrixXd lt_affinity;           // lanes x elements, binary

    map::LocalSDMap sd_map;                // ego frame, already classified
    EvidenceGrid evidence;
};

struct Prediction {
    std::vector<LaneCenterline> lanes;     // with confidences
    std::vector<TrafficElement> elements;  // with confidences
    Eigen::MatrixXd ll_affinity;           // lanes x lanes, real [0,1]
    Eigen::MatrixXd lt_affinity;           // lanes x elements, real [0,1]
};

// JSON round-trip. Parsers throw ParseError on malformed JSON and
// StructuralError on schema violations (wrong point counts, affinity shape
// mismatches, unknown categories).
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text, const std::string& origin = "scene");
std::string prediction_to_json(const Prediction& pred);
Prediction prediction_from_json(const std::string& text,
                                const std::string& origin = "prediction");

void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);
void save_prediction(const std::string& path, const Prediction& pred);
Prediction load_prediction(const std::string& path);

}  // namespace smerf::ev
