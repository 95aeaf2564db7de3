#include "smerf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "smerf/encoding.hpp"
#include "smerf/errors.hpp"
#include "smerf/rng.hpp"

namespace smerf::synth {

RoadLayout parse_layout(const std::string& name) {
    if (name == "straight") return RoadLayout::kStraight;
    if (name == "curve") return RoadLayout::kCurve;
    if (name == "t") return RoadLayout::kTee;
    if (name == "4way") return RoadLayout::kFourWay;
    throw std::invalid_argument("unknown layout '" + name + "' (straight|curve|t|4way)");
}

std::string layout_name(RoadLayout layout) {
    switch (layout) {
        case RoadLayout::kStraight: return "straight";
        case RoadLayout::kCurve: return "curve";
        case RoadLayout::kTee: return "t";
        case RoadLayout::kFourWay: return "4way";
    }
    return "?";
}

OcclusionSpec parse_occlusion(const std::string& text) {
    OcclusionSpec spec;
    if (text == "none") {
        spec.kind = OcclusionKind::kNone;
    } else if (text == "building_box") {
        spec.kind = OcclusionKind::kBuildingBox;
    } else if (text.rfind("range_limit", 0) == 0) {
        spec.kind = OcclusionKind::kRangeLimit;
        const auto colon = text.find(':');
        if (colon != std::string::npos) spec.range_limit = std::stod(text.substr(colon + 1));
    } else {
        throw std::invalid_argument("unknown occlusion '" + text +
                                    "' (none|building_box|range_limit:<m>)");
    }
    return spec;
}

std::string occlusion_name(const OcclusionSpec& spec) {
    switch (spec.kind) {
        case OcclusionKind::kNone: return "none";
        case OcclusionKind::kBuildingBox: return "building_box";
        case OcclusionKind::kRangeLimit: {
            char buf[48];
            std::snprintf(buf, sizeof buf, "range_limit:%g", spec.range_limit);
            return buf;
        }
    }
    return "?";
}

void SceneConfig::validate() const {
    if (lanes_per_road < 1 || lanes_per_road > 4)
        throw std::invalid_argument("lanes_per_road must be 1..4");
    if (sd_noise_sigma < 0.0) throw std::invalid_argument("sd_noise_sigma must be >= 0");
    if (traffic_element_count < 0)
        throw std::invalid_argument("traffic_element_count must be >= 0");
    if (grid_rows < 1 || grid_cols < 1) throw std::invalid_argument("grid dims must be >= 1");
    if (occlusion.kind == OcclusionKind::kRangeLimit && occlusion.range_limit <= 0.0)
        throw std::invalid_argument("range_limit must be > 0");
}

namespace {

constexpr double kLaneSpacing = 3.5;     // meters between parallel lanes
constexpr double kSegmentLength = 25.0;  // target lane-segment length
constexpr double kJunctionHalf = 8.0;    // junction box half extent

struct LaneBuild {
    Polyline2 points;  // 11 points
    bool is_intersection = false;
};

struct Layout {
    std::vector<LaneBuild> lanes;
    std::vector<Polyline2> skeletons;  // one per road
    std::vector<map::RoadType> skeleton_types;
    std::vector<std::vector<int>> entry_groups;  // lane ids feeding a junction entry
};

Polyline2 straight_dense(const Vec2& a, const Vec2& b) {
    const int n = std::max(2, static_cast<int>(std::ceil(distance(a, b))) + 1);
    return enc::resample_polyline({a, b}, n);
}

Polyline2 offset_dense(const Polyline2& path, double offset) {
    const size_t n = path.size();
    Polyline2 out(n);
    for (size_t i = 0; i < n; ++i) {
        const Vec2 t = path[std::min(i + 1, n - 1)] - path[i == 0 ? 0 : i - 1];
        const double len = t.norm();
        const Vec2 normal = len > 0.0 ? Vec2{-t.y / len, t.x / len} : Vec2{0.0, 1.0};
        out[i] = path[i] + normal * offset;  // +offset is left of travel
    }
    return out;
}

Polyline2 bezier_dense(const Vec2& p0, const Vec2& control, const Vec2& p1) {
    Polyline2 out;
    out.reserve(41);
    for (int k = 0; k <= 40; ++k) {
        const double t = k / 40.0;
        const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
        out.push_back({a * p0.x + b * control.x + c * p1.x,
                       a * p0.y + b * control.y + c * p1.y});
    }
    // exact endpoints (affinity construction relies on bitwise equality)
    out.front() = p0;
    out.back() = p1;
    return out;
}

// Cuts a dense lane path into ~25 m chained segments of 11 points each;
// consecutive segments share their boundary point bitwise.
std::vector<Polyline2> cut_segments(const Polyline2& dense) {
    const double len = polyline_length(dense);
    const int n_seg = std::max(1, static_cast<int>(std::llround(len / kSegmentLength)));
    const Polyline2 resampled = enc::resample_polyline(dense, n_seg * 10 + 1);
    std::vector<Polyline2> segments(n_seg);
    for (int s = 0; s < n_seg; ++s)
        segments[s].assign(resampled.begin() + s * 10, resampled.begin() + s * 10 + 11);
    return segments;
}

std::vector<double> lane_offsets(int lanes) {
    std::vector<double> o(lanes);
    for (int i = 0; i < lanes; ++i) o[i] = (i - (lanes - 1) / 2.0) * kLaneSpacing;
    return o;
}

// Appends a lane chain; returns the id of its final segment.
int push_chain(Layout& layout, const Polyline2& dense, bool intersection = false) {
    for (auto& seg : cut_segments(dense))
        layout.lanes.push_back({std::move(seg), intersection});
    return static_cast<int>(layout.lanes.size()) - 1;
}

Layout build_straight(int lanes, Rng& geom) {
    Layout layout;
    const double c = geom.uniform(-3.0, 3.0);
    const Polyline2 center = straight_dense({-50.0, c}, {50.0, c});
    std::vector<int> finals;
    for (double o : lane_offsets(lanes))
        finals.push_back(push_chain(layout, offset_dense(center, o)));
    layout.skeletons.push_back(center);
    layout.skeleton_types.push_back(map::kResidential);
    layout.entry_groups.push_back(finals);
    return layout;
}

Layout build_curve(int lanes, Rng& geom) {
    Layout layout;
    const double amplitude = (geom.uniform() < 0.5 ? 1.0 : -1.0) * geom.uniform(8.0, 14.0);
    Polyline2 center;
    center.reserve(101);
    for (int k = 0; k <= 100; ++k) {
        const double x = -50.0 + k;
        center.push_back({x, amplitude * std::sin(M_PI * x / 96.0)});
    }
    std::vector<int> finals;
    for (double o : lane_offsets(lanes))
        finals.push_back(push_chain(layout, offset_dense(center, o)));
    layout.skeletons.push_back(center);
    layout.skeleton_types.push_back(map::kResidential);
    layout.entry_groups.push_back(finals);
    return layout;
}

Layout build_junction(int lanes, Rng& geom, bool four_way) {
    Layout layout;
    const double cx = 25.0 + geom.uniform(-3.0, 3.0);  // junction center (cx, 0)
    const auto offsets = lane_offsets(lanes);
    const double h = kJunctionHalf;

    std::vector<int> west_final(lanes), south_final(lanes);
    std::vector<Vec2> west_end(lanes), east_start(lanes), south_end(lanes), north_start(lanes);
    for (int i = 0; i < lanes; ++i) {
        const double o = offsets[i];
        west_end[i] = {cx - h, o};
        east_start[i] = {cx + h, o};
        south_end[i] = {cx - o, -h};   // +offset is left of +y travel, i.e. -x
        north_start[i] = {cx - o, h};
    }

    for (int i = 0; i < lanes; ++i)
        west_final[i] = push_chain(layout, straight_dense({-50.0, offsets[i]}, west_end[i]));
    for (int i = 0; i < lanes; ++i)
        push_chain(layout, straight_dense(east_start[i], {50.0, offsets[i]}));
    for (int i = 0; i < lanes; ++i)
        south_final[i] = push_chain(layout, straight_dense({cx - offsets[i], -24.0}, south_end[i]));
    if (four_way)
        for (int i = 0; i < lanes; ++i)
            push_chain(layout, straight_dense(north_start[i], {cx - offsets[i], 24.0}));

    // Connector lanes across the junction box (the intersection lanes).
    for (int i = 0; i < lanes; ++i)  // west -> east through
        push_chain(layout, straight_dense(west_end[i], east_start[i]), true);
    for (int i = 0; i < lanes; ++i) {  // south -> east right turn
        const Vec2 control{cx - offsets[i], offsets[i]};
        push_chain(layout, bezier_dense(south_end[i], control, east_start[i]), true);
    }
    if (four_way) {
        for (int i = 0; i < lanes; ++i)  // south -> north through
            push_chain(layout, straight_dense(south_end[i], north_start[i]), true);
        for (int i = 0; i < lanes; ++i) {  // west -> north left turn
            const Vec2 control{cx - offsets[i], offsets[i]};
            push_chain(layout, bezier_dense(west_end[i], control, north_start[i]), true);
        }
    }

    layout.skeletons.push_back(straight_dense({-50.0, 0.0}, {50.0, 0.0}));
    layout.skeleton_types.push_back(map::kResidential);
    layout.skeletons.push_back(
        straight_dense({cx, -24.0}, {cx, four_way ? 24.0 : 0.0}));
    layout.skeleton_types.push_back(map::kService);
    layout.entry_groups.push_back(west_final);
    layout.entry_groups.push_back(south_final);
    return layout;
}

Layout build_layout(const SceneConfig& config, Rng& geom) {
    switch (config.layout) {
        case RoadLayout::kStraight: return build_straight(config.lanes_per_road, geom);
        case RoadLayout::kCurve: return build_curve(config.lanes_per_road, geom);
        case RoadLayout::kTee: return build_junction(config.lanes_per_road, geom, false);
        case RoadLayout::kFourWay: return build_junction(config.lanes_per_road, geom, true);
    }
    throw std::invalid_argument("bad layout");
}

bool point_occluded(const Vec2& p, const OcclusionSpec& spec, const Rect& building) {
    switch (spec.kind) {
        case OcclusionKind::kNone: return false;
        case OcclusionKind::kBuildingBox: return building.contains(p);
        case OcclusionKind::kRangeLimit: return p.norm() > spec.range_limit;
    }
    return false;
}

}  // namespace

ev::Scene generate_scene(const SceneConfig& config) {
    config.validate();
    Rng geom(substream(config.seed, "geometry"));
    Rng noise(substream(config.seed, "sd_noise"));
    Rng occluder_rng(substream(config.seed, "occluder"));
    Rng element_rng(substream(config.seed, "elements"));
    Rng anchor_rng(substream(config.seed, "anchor"));

    const Layout layout = build_layout(config, geom);
    ev::Scene scene;

    // Ground-truth lanes.
    const int n = static_cast<int>(layout.lanes.size());
    scene.gt_lanes.reserve(n);
    scene.is_intersection.reserve(n);
    for (int i = 0; i < n; ++i) {
        ev::LaneCenterline lane;
        lane.id = i;
        lane.confidence = 1.0;
        for (const auto& p : layout.lanes[i].points) lane.points.push_back({p.x, p.y, 0.0});
        scene.gt_lanes.push_back(std::move(lane));
        scene.is_intersection.push_back(layout.lanes[i].is_intersection ? 1 : 0);
    }

    // Lane-lane affinity from endpoint adjacency.
    scene.ll_affinity = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (distance(scene.gt_lanes[i].points.back(), scene.gt_lanes[j].points.front()) <=
                0.1)
                scene.ll_affinity(i, j) = 1.0;
        }

    // Traffic elements at junction entries (or road ends), round-robin.
    const int n_elems = config.traffic_element_count;
    scene.lt_affinity = Eigen::MatrixXd::Zero(n, n_elems);
    for (int k = 0; k < n_elems; ++k) {
        ev::TrafficElement e;
        const double jx = element_rng.uniform(0.0, 10.0);
        const double jy = element_rng.uniform(0.0, 10.0);
        const double w = element_rng.uniform(34.0, 54.0);
        const double hgt = element_rng.uniform(34.0, 54.0);
        e.x0 = 40.0 + 90.0 * k + jx;
        e.y0 = 120.0 + jy;
        e.x1 = e.x0 + w;
        e.y1 = e.y0 + hgt;
        e.category = ev::kElementCategories[k % ev::kElementCategories.size()];
        e.confidence = 1.0;
        e.id = k;
        const auto& group = layout.entry_groups[k % layout.entry_groups.size()];
        for (int lane_id : group) scene.lt_affinity(lane_id, k) = 1.0;
        scene.gt_elements.push_back(std::move(e));
    }

    // SD map: noisy skeleton control points, clamped into the BEV window.
    const Rect window = config.bev_range.rect();
    for (size_t r = 0; r < layout.skeletons.size(); ++r) {
        const double len = polyline_length(layout.skeletons[r]);
        const int n_ctrl = std::max(2, static_cast<int>(std::llround(len / 10.0)) + 1);
        Polyline2 ctrl = enc::resample_polyline(layout.skeletons[r], n_ctrl);
        for (auto& p : ctrl) {
            p.x += noise.gaussian(config.sd_noise_sigma);
            p.y += noise.gaussian(config.sd_noise_sigma);
            p.x = std::clamp(p.x, window.min_x, window.max_x);
            p.y = std::clamp(p.y, window.min_y, window.max_y);
        }
        map::LocalPolyline pl;
        pl.points = std::move(ctrl);
        pl.road_type.set(layout.skeleton_types[r]);
        pl.source_index = static_cast<int>(r);
        scene.sd_map.polylines.push_back(std::move(pl));
    }

    // Visible-evidence grid: a cell is on iff it contains a non-occluded
    // ground-truth lane point.
    Rect building{};
    if (config.occlusion.kind == OcclusionKind::kBuildingBox) {
        const double bx = occluder_rng.uniform(10.0, 25.0);
        const double by = occluder_rng.uniform(-5.0, 5.0);
        building = Rect{bx - 10.0, by - 7.0, bx + 10.0, by + 7.0};
    }
    scene.evidence.rows = config.grid_rows;
    scene.evidence.cols = config.grid_cols;
    scene.evidence.cells.assign(static_cast<size_t>(config.grid_rows) * config.grid_cols, 0);
    const double span_x = config.bev_range.backward + config.bev_range.forward;
    const double span_y = config.bev_range.right + config.bev_range.left;
    for (const auto& lane : scene.gt_lanes) {
        for (const auto& p3 : lane.points) {
            const Vec2 p{p3.x, p3.y};
            if (point_occluded(p, config.occlusion, building)) continue;
            int r = static_cast<int>((p.x + config.bev_range.backward) / span_x *
                                     config.grid_rows);
            int c = static_cast<int>((p.y + config.bev_range.right) / span_y *
                                     config.grid_cols);
            r = std::clamp(r, 0, config.grid_rows - 1);
            c = std::clamp(c, 0, config.grid_cols - 1);
            scene.evidence.at(r, c) = 1;
        }
    }

    // Global placement metadata for geo-disjoint splitting.
    const int tx = anchor_rng.uniform_int(12);
    const int ty = anchor_rng.uniform_int(12);
    scene.region_anchor = {100.0 * tx + 50.0, 100.0 * ty + 50.0};
    scene.region_tile = std::to_string(tx) + "_" + std::to_string(ty);
    scene.ego_pose = {scene.region_anchor.x, scene.region_anchor.y, 0.0};
    return scene;
}

SplitResult split_geodisjoint(const std::vector<ev::Scene>& scenes, double tile_size_meters,
                              double val_fraction, uint64_t seed) {
    if (tile_size_meters <= 0.0) throw std::invalid_argument("tile size must be > 0");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("val fraction must be in (0, 1)");

    std::map<std::pair<long, long>, std::vector<int>> tiles;
    for (size_t i = 0; i < scenes.size(); ++i) {
        const auto key = std::make_pair(
            static_cast<long>(std::floor(scenes[i].region_anchor.x / tile_size_meters)),
            static_cast<long>(std::floor(scenes[i].region_anchor.y / tile_size_meters)));
        tiles[key].push_back(static_cast<int>(i));
    }
    const int n_tiles = static_cast<int>(tiles.size());
    if (n_tiles < 2)
        throw StructuralError("geo-disjoint split needs >= 2 distinct tiles, got " +
                              std::to_string(n_tiles));

    std::vector<const std::vector<int>*> tile_scenes;
    tile_scenes.reserve(n_tiles);
    for (const auto& [key, idx] : tiles) tile_scenes.push_back(&idx);
    std::vector<int> order(n_tiles);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(substream(seed, "geo_split"));
    rng.shuffle(order);

    int n_val = static_cast<int>(std::llround(val_fraction * n_tiles));
    n_val = std::clamp(n_val, 1, n_tiles - 1);

    SplitResult result;
    for (int k = 0; k < n_tiles; ++k) {
        auto& dst = k < n_val ? result.val : result.train;
        for (int idx : *tile_scenes[order[k]]) dst.push_back(idx);
    }
    std::sort(result.train.begin(), result.train.end());
    std::sort(result.val.begin(), result.val.end());
    return result;
}

ev::Scene degrade_map(const ev::Scene& scene, double drop_fraction, uint64_t seed) {
    if (drop_fraction < 0.0 || drop_fraction > 1.0)
        throw std::invalid_argument("drop fraction must be in [0, 1]");
    const int m = scene.sd_map.size();
    const int n_drop = static_cast<int>(std::llround(drop_fraction * m));

    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(substream(seed, "degrade"));
    rng.shuffle(order);
    std::vector<uint8_t> dropped(m, 0);
    for (int k = 0; k < n_drop; ++k) dropped[order[k]] = 1;

    ev::Scene out = scene;
    out.sd_map.polylines.clear();
    for (int i = 0; i < m; ++i)
        if (!dropped[i]) out.sd_map.polylines.push_back(scene.sd_map.polylines[i]);
    return out;
}

}  // namespace smerf::synth
