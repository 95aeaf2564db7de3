#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smerf/geometry.hpp"

namespace smerf::map {

// 3-DoF ego pose in the global frame. Heading is counterclockwise-positive,
// normalized to (-pi, pi]; ego frame is +x forward, +y left.
struct EgoPose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

// Fixed road-type category order. kOther is the catch-all.
enum RoadType : int {
    kPedestrian = 0,
    kHighway = 1,
    kResidential = 2,
    kService = 3,
    kBusWay = 4,
    kTruckRoad = 5,
    kOther = 6,
};

inline constexpr int kRoadTypeCount = 7;

extern const std::array<const char*, kRoadTypeCount> kRoadTypeNames;

// Multi-hot road-type flags; at least one flag is always set.
struct RoadTypeVector {
    std::array<uint8_t, kRoadTypeCount> flags{};

    bool has(RoadType t) const { return flags[static_cast<int>(t)] != 0; }
    void set(RoadType t) { flags[static_cast<int>(t)] = 1; }
    int count() const {
        int n = 0;
        for (auto f : flags) n += f;
        return n;
    }
    bool operator==(const RoadTypeVector& o) const { return flags == o.flags; }
};

using TagSet = std::map<std::string, std::string>;

// Road-level polyline in global metric coordinates with its raw OSM tags.
struct TaggedPolyline {
    Polyline2 points;
    TagSet tags;
};

// A parsed map extract: polylines in a local metric frame plus their bounds.
struct SDMapTile {
    std::vector<TaggedPolyline> polylines;
    Rect bounds;
};

// BEV query window around the ego vehicle, all extents strictly positive.
struct BevRange {
    double forward = 50.0;
    double backward = 50.0;
    double left = 25.0;
    double right = 25.0;

    Rect rect() const { return Rect{-backward, -right, forward, left}; }
};

struct LocalPolyline {
    Polyline2 points;  // ego frame, clipped to the BEV window
    RoadTypeVector road_type;
    int source_index = -1;  // index of the tile polyline this piece came from
};

// SD map queried around the ego vehicle: M ego-frame polylines with types.
struct LocalSDMap {
    std::vector<LocalPolyline> polylines;

    int size() const { return static_cast<int>(polylines.size()); }
};

// Parses either the supported OSM XML subset or the JSON tile format,
// sniffing the format from the first non-space byte.
SDMapTile parse_osm_extract(const std::string& raw_bytes);

// OSM XML subset: <node id lat lon/> and <way id><nd ref/><tag k v/></way>.
// Ways without a "highway" tag are dropped. Node lat/lon are projected to
// local metric coordinates with an equirectangular tangent plane anchored at
// the midpoint of the node bounding box (x = R*dlon*cos(lat0), y = R*dlat,
// R = 6371000 m).
SDMapTile parse_osm_xml(const std::string& xml);

// JSON tile format:
//   {"bounds": [minx,miny,maxx,maxy],
//    "polylines": [{"points": [[x,y],...], "tags": {"highway":"residential"}}]}
SDMapTile parse_tile_json(const std::string& json_text);

std::string tile_to_json(const SDMapTile& tile);

// Deterministic OSM tag -> category mapping. Unknown tags map to kOther;
// several tags may set several flags (e.g. highway + hgv=designated).
RoadTypeVector classify_road_type(const TagSet& tags);

// Rigid transform of a global point into the ego frame of `pose`.
Vec2 to_ego_frame(const Vec2& point_global, const EgoPose& pose);

// Transforms every tile polyline into the ego frame and clips it to the BEV
// window. Segments crossing the window boundary are cut at the intersection
// point; a polyline leaving and re-entering the window becomes several
// polylines. Pieces degenerating to a single point are dropped.
// Throws OutOfCoverageError when the ego position is outside the tile bounds.
LocalSDMap query_local_map(const SDMapTile& tile, const EgoPose& pose, const BevRange& range);

using RoadTypeHistogram = std::array<uint64_t, kRoadTypeCount>;

// Counts classified polylines per category; a polyline with multiple flags
// increments every set category. Keyed by caller-supplied group label.
std::map<std::string, RoadTypeHistogram> road_type_stats(
    const std::vector<std::pair<std::string, const SDMapTile*>>& tiles);

// Same, over already-classified local maps (e.g. scene SD maps).
std::map<std::string, RoadTypeHistogram> road_type_stats_local(
    const std::vector<std::pair<std::string, const LocalSDMap*>>& maps);

}  // namespace smerf::map
