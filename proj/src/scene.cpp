#include "smerf/scene.hpp"

#include <algorithm>

#include <json.hpp>

#include "smerf/errors.hpp"
#include "smerf/smrf_io.hpp"

namespace smerf::ev {

using nlohmann::json;

bool is_known_element_category(const std::string& name) {
    return std::find(kElementCategories.begin(), kElementCategories.end(), name) !=
           kElementCategories.end();
}

double box_iou(const TrafficElement& a, const TrafficElement& b) {
    const double ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    const double ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    const double iw = ix1 - ix0, ih = iy1 - iy0;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

namespace {

json points3_to_json(const std::vector<Vec3>& pts) {
    json out = json::array();
    for (const auto& p : pts) out.push_back({p.x, p.y, p.z});
    return out;
}

std::vector<Vec3> points3_from_json(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw StructuralError(where + ": points must be an array");
    std::vector<Vec3> pts;
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 3)
            throw StructuralError(where + ": each point must be [x,y,z]");
        pts.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    return pts;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& arr, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& where) {
    if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows)
        throw StructuralError(where + ": expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = arr[r];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw StructuralError(where + ": row " + std::to_string(r) + " expected " +
                                  std::to_string(cols) + " columns");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
    }
    return m;
}

json element_to_json(const TrafficElement& e) {
    return {{"box", {e.x0, e.y0, e.x1, e.y1}},
            {"category", e.category},
            {"confidence", e.confidence}};
}

TrafficElement element_from_json(const json& j, int id, const std::string& where) {
    TrafficElement e;
    const auto& box = j.at("box");
    if (!box.is_array() || box.size() != 4)
        throw StructuralError(where + ": box must be [x0,y0,x1,y1]");
    e.x0 = box[0].get<double>();
    e.y0 = box[1].get<double>();
    e.x1 = box[2].get<double>();
    e.y1 = box[3].get<double>();
    if (e.x1 <= e.x0 || e.y1 <= e.y0)
        throw StructuralError(where + ": box must have positive area");
    e.category = j.at("category").get<std::string>();
    if (!is_known_element_category(e.category))
        throw StructuralError(where + ": unknown category '" + e.category + "'");
    e.confidence = j.value("confidence", 1.0);
    e.id = id;
    return e;
}

json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // nlohmann reports a byte offset; convert to line/column.
        int line = 1, col = 1;
        for (size_t i = 0; i < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError(origin + ": " + e.what(), line, col);
    }
}

std::vector<LaneCenterline> lanes_from_json(const json& arr, bool require_11,
                                            const std::string& where) {
    std::vector<LaneCenterline> lanes;
    int id = 0;
    for (const auto& j : arr) {
        LaneCenterline lane;
        lane.points = points3_from_json(j.at("points"), where);
        if (require_11 && static_cast<int>(lane.points.size()) != kLanePointCount)
            throw StructuralError(where + ": lane " + std::to_string(id) + " has " +
                                  std::to_string(lane.points.size()) + " points, expected 11");
        if (lane.points.empty())
            throw StructuralError(where + ": lane " + std::to_string(id) + " has no points");
        lane.confidence = j.value("confidence", 1.0);
        lane.id = id++;
        lanes.push_back(std::move(lane));
    }
    return lanes;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
    json lanes = json::array();
    for (size_t i = 0; i < scene.gt_lanes.size(); ++i) {
        lanes.push_back({{"points", points3_to_json(scene.gt_lanes[i].points)},
                         {"is_intersection",
                          i < scene.is_intersection.size() && scene.is_intersection[i] != 0}});
    }
    json elements = json::array();
    for (const auto& e : scene.gt_elements) elements.push_back(element_to_json(e));

    json sd = json::array();
    for (const auto& pl : scene.sd_map.polylines) {
        json pts = json::array();
        for (const auto& p : pl.points) pts.push_back({p.x, p.y});
        json flags = json::array();
        for (auto f : pl.road_type.flags) flags.push_back(static_cast<int>(f));
        sd.push_back({{"points", std::move(pts)}, {"road_type", std::move(flags)}});
    }

    json evidence = {{"rows", scene.evidence.rows},
                     {"cols", scene.evidence.cols},
                     {"cells", scene.evidence.cells}};

    json out = {{"ego_pose",
                 {{"x", scene.ego_pose.x},
                  {"y", scene.ego_pose.y},
                  {"heading", scene.ego_pose.heading}}},
                {"region_tile", scene.region_tile},
                {"region_anchor", {scene.region_anchor.x, scene.region_anchor.y}},
                {"gt_lanes", std::move(lanes)},
                {"gt_traffic_elements", std::move(elements)},
                {"gt_ll_affinity", matrix_to_json(scene.ll_affinity)},
                {"gt_lt_affinity", matrix_to_json(scene.lt_affinity)},
                {"sd_map", std::move(sd)},
                {"visible_evidence", std::move(evidence)}};
    return out.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text, const std::string& origin) {
    const json j = parse_json(text, origin);
    Scene s;
    try {
        const auto& pose = j.at("ego_pose");
        s.ego_pose = {pose.at("x").get<double>(), pose.at("y").get<double>(),
                      pose.at("heading").get<double>()};
        s.region_tile = j.value("region_tile", std::string{});
        if (j.contains("region_anchor")) {
            const auto& a = j.at("region_anchor");
            s.region_anchor = {a.at(0).get<double>(), a.at(1).get<double>()};
        }

        s.gt_lanes = lanes_from_json(j.at("gt_lanes"), true, origin + ".gt_lanes");
        s.is_intersection.resize(s.gt_lanes.size(), 0);
        for (size_t i = 0; i < s.gt_lanes.size(); ++i)
            s.is_intersection[i] = j.at("gt_lanes")[i].value("is_intersection", false) ? 1 : 0;

        int eid = 0;
        for (const auto& e : j.at("gt_traffic_elements"))
            s.gt_elements.push_back(element_from_json(e, eid++, origin + ".gt_traffic_elements"));

        const auto n_lanes = static_cast<Eigen::Index>(s.gt_lanes.size());
        const auto n_elems = static_cast<Eigen::Index>(s.gt_elements.size());
        s.ll_affinity =
            matrix_from_json(j.at("gt_ll_affinity"), n_lanes, n_lanes, origin + ".gt_ll_affinity");
        s.lt_affinity =
            matrix_from_json(j.at("gt_lt_affinity"), n_lanes, n_elems, origin + ".gt_lt_affinity");
        for (Eigen::Index r = 0; r < s.ll_affinity.rows(); ++r)
            for (Eigen::Index c = 0; c < s.ll_affinity.cols(); ++c)
                if (s.ll_affinity(r, c) != 0.0 && s.ll_affinity(r, c) != 1.0)
                    throw StructuralError(origin + ".gt_ll_affinity: entries must be binary");
        for (Eigen::Index r = 0; r < s.lt_affinity.rows(); ++r)
            for (Eigen::Index c = 0; c < s.lt_affinity.cols(); ++c)
                if (s.lt_affinity(r, c) != 0.0 && s.lt_affinity(r, c) != 1.0)
                    throw StructuralError(origin + ".gt_lt_affinity: entries must be binary");

        for (const auto& pl : j.at("sd_map")) {
            map::LocalPolyline lp;
            for (const auto& p : pl.at("points")) {
                if (!p.is_array() || p.size() != 2)
                    throw StructuralError(origin + ".sd_map: each point must be [x,y]");
                lp.points.push_back({p[0].get<double>(), p[1].get<double>()});
            }
            if (lp.points.size() < 2)
                throw StructuralError(origin + ".sd_map: polyline needs >= 2 points");
            const auto& flags = pl.at("road_type");
            if (!flags.is_array() || flags.size() != map::kRoadTypeCount)
                throw StructuralError(origin + ".sd_map: road_type needs " +
                                      std::to_string(map::kRoadTypeCount) + " flags");
            for (int k = 0; k < map::kRoadTypeCount; ++k)
                lp.road_type.flags[k] = flags[k].get<int>() != 0 ? 1 : 0;
            if (lp.road_type.count() == 0)
                throw StructuralError(origin + ".sd_map: road_type must have a flag set");
            lp.source_index = static_cast<int>(s.sd_map.polylines.size());
            s.sd_map.polylines.push_back(std::move(lp));
        }

        const auto& ev = j.at("visible_evidence");
        s.evidence.rows = ev.at("rows").get<int>();
        s.evidence.cols = ev.at("cols").get<int>();
        s.evidence.cells = ev.at("cells").get<std::vector<uint8_t>>();
        if (static_cast<int>(s.evidence.cells.size()) != s.evidence.rows * s.evidence.cols)
            throw StructuralError(origin + ".visible_evidence: cells size != rows*cols");
    } catch (const json::exception& e) {
        throw StructuralError(origin + ": " + e.what());
    }
    return s;
}

std::string prediction_to_json(const Prediction& pred) {
    json lanes = json::array();
    for (const auto& lane : pred.lanes)
        lanes.push_back(
            {{"points", points3_to_json(lane.points)}, {"confidence", lane.confidence}});
    json elements = json::array();
    for (const auto& e : pred.elements) elements.push_back(element_to_json(e));
    json out = {{"pred_lanes", std::move(lanes)},
                {"pred_elements", std::move(elements)},
                {"pred_ll_affinity", matrix_to_json(pred.ll_affinity)},
                {"pred_lt_affinity", matrix_to_json(pred.lt_affinity)}};
    return out.dump(2) + "\n";
}

Prediction prediction_from_json(const std::string& text, const std::string& origin) {
    const json j = parse_json(text, origin);
    Prediction p;
    try {
        p.lanes = lanes_from_json(j.at("pred_lanes"), false, origin + ".pred_lanes");
        int eid = 0;
        for (const auto& e : j.at("pred_elements"))
            p.elements.push_back(element_from_json(e, eid++, origin + ".pred_elements"));
        const auto n_lanes = static_cast<Eigen::Index>(p.lanes.size());
        const auto n_elems = static_cast<Eigen::Index>(p.elements.size());
        p.ll_affinity = matrix_from_json(j.at("pred_ll_affinity"), n_lanes, n_lanes,
                                         origin + ".pred_ll_affinity");
        p.lt_affinity = matrix_from_json(j.at("pred_lt_affinity"), n_lanes, n_elems,
                                         origin + ".pred_lt_affinity");
    } catch (const json::exception& e) {
        throw StructuralError(origin + ": " + e.what());
    }
    return p;
}

void save_scene(const std::string& path, const Scene& scene) {
    io::atomic_write_file(path, scene_to_json(scene));
}

Scene load_scene(const std::string& path) {
    const auto bytes = io::read_file_bytes(path);
    return scene_from_json(std::string(bytes.begin(), bytes.end()), path);
}

void save_prediction(const std::string& path, const Prediction& pred) {
    io::atomic_write_file(path, prediction_to_json(pred));
}

Prediction load_prediction(const std::string& path) {
    const auto bytes = io::read_file_bytes(path);
    return prediction_from_json(std::string(bytes.begin(), bytes.end()), path);
}

}  // namespace smerf::ev
