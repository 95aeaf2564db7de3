#include "smerf/sdmap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "smerf/errors.hpp"

namespace smerf::map {

const std::array<const char*, kRoadTypeCount> kRoadTypeNames = {
    "pedestrian", "highway", "residential", "service", "bus_way", "truck_road", "other"};

namespace {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = M_PI / 180.0;

// ---------------------------------------------------------------------------
// Minimal XML scanner for the OSM subset. Tracks line/column for errors.
// ---------------------------------------------------------------------------

struct XmlAttr {
    std::string name;
    std::string value;
};

struct XmlElement {
    std::string name;
    std::vector<XmlAttr> attrs;
    bool self_closing = false;
    bool closing = false;  // </name>

    const std::string* attr(const std::string& key) const {
        for (const auto& a : attrs)
            if (a.name == key) return &a.value;
        return nullptr;
    }
};

class XmlScanner {
public:
    explicit XmlScanner(const std::string& text) : text_(text) {}

    // Returns the next element tag, or nullopt at end of input.
    std::optional<XmlElement> next() {
        for (;;) {
            skip_until('<');
            if (eof()) return std::nullopt;
            if (match("<?")) {
                skip_past("?>");
                continue;
            }
            if (match("<!--")) {
                skip_past("-->");
                continue;
            }
            if (match("<!")) {  // DOCTYPE etc.
                skip_until('>');
                advance();
                continue;
            }
            return read_tag();
        }
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col_); }

private:
    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }

    void advance() {
        if (eof()) return;
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    bool match(const char* s) {
        size_t n = std::strlen(s);
        if (text_.compare(pos_, n, s) != 0) return false;
        for (size_t i = 0; i < n; ++i) advance();
        return true;
    }

    void skip_until(char c) {
        while (!eof() && peek() != c) advance();
    }

    void skip_past(const char* s) {
        size_t found = text_.find(s, pos_);
        if (found == std::string::npos) fail(std::string("unterminated '") + s + "' construct");
        while (pos_ <= found) advance();
        size_t n = std::strlen(s);
        for (size_t i = 1; i < n; ++i) advance();
    }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) advance();
    }

    std::string read_name() {
        std::string out;
        while (!eof()) {
            char c = peek();
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':') {
                out.push_back(c);
                advance();
            } else {
                break;
            }
        }
        if (out.empty()) fail("expected name");
        return out;
    }

    std::string decode_entities(const std::string& s) {
        if (s.find('&') == std::string::npos) return s;
        std::string out;
        for (size_t i = 0; i < s.size();) {
            if (s[i] != '&') {
                out.push_back(s[i++]);
                continue;
            }
            size_t semi = s.find(';', i);
            if (semi == std::string::npos) fail("unterminated entity reference");
            std::string ent = s.substr(i + 1, semi - i - 1);
            if (ent == "amp") out.push_back('&');
            else if (ent == "lt") out.push_back('<');
            else if (ent == "gt") out.push_back('>');
            else if (ent == "quot") out.push_back('"');
            else if (ent == "apos") out.push_back('\'');
            else fail("unknown entity '&" + ent + ";'");
            i = semi + 1;
        }
        return out;
    }

    XmlElement read_tag() {
        XmlElement el;
        if (!match("<")) fail("expected '<'");
        if (!eof() && peek() == '/') {
            advance();
            el.closing = true;
            el.name = read_name();
            skip_ws();
            if (eof() || peek() != '>') fail("malformed closing tag </" + el.name + ">");
            advance();
            return el;
        }
        el.name = read_name();
        for (;;) {
            skip_ws();
            if (eof()) fail("unterminated tag <" + el.name + ">");
            char c = peek();
            if (c == '>') {
                advance();
                return el;
            }
            if (c == '/') {
                advance();
                if (eof() || peek() != '>') fail("expected '/>' in tag <" + el.name + ">");
                advance();
                el.self_closing = true;
                return el;
            }
            XmlAttr a;
            a.name = read_name();
            skip_ws();
            if (eof() || peek() != '=') fail("attribute '" + a.name + "' missing '='");
            advance();
            skip_ws();
            if (eof() || (peek() != '"' && peek() != '\'')) fail("attribute value must be quoted");
            char quote = peek();
            advance();
            std::string raw;
            while (!eof() && peek() != quote) {
                raw.push_back(peek());
                advance();
            }
            if (eof()) fail("unterminated attribute value");
            advance();
            a.value = decode_entities(raw);
            el.attrs.push_back(std::move(a));
        }
    }

    const std::string& text_;
    size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

double parse_double_attr(XmlScanner& sc, const XmlElement& el, const std::string& key) {
    const std::string* v = el.attr(key);
    if (!v) sc.fail("<" + el.name + "> missing attribute '" + key + "'");
    try {
        size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing chars");
        return d;
    } catch (const std::exception&) {
        sc.fail("<" + el.name + "> attribute '" + key + "' is not a number: '" + *v + "'");
    }
}

int64_t parse_id_attr(XmlScanner& sc, const XmlElement& el, const std::string& key) {
    const std::string* v = el.attr(key);
    if (!v) sc.fail("<" + el.name + "> missing attribute '" + key + "'");
    try {
        size_t used = 0;
        int64_t d = std::stoll(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing chars");
        return d;
    } catch (const std::exception&) {
        sc.fail("<" + el.name + "> attribute '" + key + "' is not an integer: '" + *v + "'");
    }
}

Rect bounds_of(const std::vector<TaggedPolyline>& polylines) {
    Rect r;
    bool first = true;
    for (const auto& pl : polylines) {
        for (const auto& p : pl.points) {
            if (first) {
                r = Rect{p.x, p.y, p.x, p.y};
                first = false;
            } else {
                r.min_x = std::min(r.min_x, p.x);
                r.min_y = std::min(r.min_y, p.y);
                r.max_x = std::max(r.max_x, p.x);
                r.max_y = std::max(r.max_y, p.y);
            }
        }
    }
    return r;
}

}  // namespace

SDMapTile parse_osm_xml(const std::string& xml) {
    struct LatLon {
        double lat, lon;
    };
    struct RawWay {
        int64_t id;
        std::vector<int64_t> refs;
        TagSet tags;
    };

    std::unordered_map<int64_t, LatLon> nodes;
    std::vector<RawWay> ways;

    XmlScanner sc(xml);
    bool in_way = false;
    RawWay cur;
    while (auto el = sc.next()) {
        if (el->closing) {
            if (el->name == "way") {
                if (!in_way) sc.fail("</way> without matching <way>");
                ways.push_back(std::move(cur));
                in_way = false;
            }
            continue;
        }
        if (el->name == "node") {
            int64_t id = parse_id_attr(sc, *el, "id");
            double lat = parse_double_attr(sc, *el, "lat");
            double lon = parse_double_attr(sc, *el, "lon");
            nodes[id] = LatLon{lat, lon};
        } else if (el->name == "way") {
            if (in_way) sc.fail("nested <way> elements are not supported");
            cur = RawWay{parse_id_attr(sc, *el, "id"), {}, {}};
            if (el->self_closing) {
                ways.push_back(std::move(cur));
            } else {
                in_way = true;
            }
        } else if (el->name == "nd" && in_way) {
            cur.refs.push_back(parse_id_attr(sc, *el, "ref"));
        } else if (el->name == "tag" && in_way) {
            const std::string* k = el->attr("k");
            const std::string* v = el->attr("v");
            if (!k || !v) sc.fail("<tag> requires both 'k' and 'v'");
            cur.tags[*k] = *v;
        }
        // other elements (osm, bounds, relation, node-level tags...) are ignored
    }
    if (in_way) sc.fail("unclosed <way> element");

    // Projection anchor: midpoint of the node bounding box.
    double lat_min = std::numeric_limits<double>::max(), lat_max = -lat_min;
    double lon_min = lat_min, lon_max = -lat_min;
    for (const auto& [id, ll] : nodes) {
        lat_min = std::min(lat_min, ll.lat);
        lat_max = std::max(lat_max, ll.lat);
        lon_min = std::min(lon_min, ll.lon);
        lon_max = std::max(lon_max, ll.lon);
    }
    const double lat0 = nodes.empty() ? 0.0 : 0.5 * (lat_min + lat_max);
    const double lon0 = nodes.empty() ? 0.0 : 0.5 * (lon_min + lon_max);
    const double coslat0 = std::cos(lat0 * kDegToRad);

    SDMapTile tile;
    for (const auto& way : ways) {
        if (!way.tags.count("highway")) continue;
        if (way.refs.size() < 2) continue;  // cannot form a segment
        TaggedPolyline pl;
        pl.tags = way.tags;
        for (int64_t ref : way.refs) {
            auto it = nodes.find(ref);
            if (it == nodes.end())
                throw StructuralError("way " + std::to_string(way.id) +
                                      " references missing node " + std::to_string(ref));
            const LatLon& ll = it->second;
            pl.points.push_back(Vec2{kEarthRadiusM * (ll.lon - lon0) * kDegToRad * coslat0,
                                     kEarthRadiusM * (ll.lat - lat0) * kDegToRad});
        }
        tile.polylines.push_back(std::move(pl));
    }
    tile.bounds = bounds_of(tile.polylines);
    return tile;
}

SDMapTile parse_tile_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        // nlohmann reports byte offsets; recover line/column for the contract.
        size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        byte = std::min(byte, json_text.size());
        int line = 1, col = 1;
        for (size_t i = 0; i < byte; ++i) {
            if (json_text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError(e.what(), line, col);
    }

    SDMapTile tile;
    try {
        const auto& b = j.at("bounds");
        if (!b.is_array() || b.size() != 4)
            throw StructuralError("'bounds' must be [minx,miny,maxx,maxy]");
        tile.bounds = Rect{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>()};
        for (const auto& jp : j.at("polylines")) {
            TaggedPolyline pl;
            for (const auto& pt : jp.at("points")) {
                if (!pt.is_array() || pt.size() != 2)
                    throw StructuralError("polyline point must be [x,y]");
                pl.points.push_back(Vec2{pt[0].get<double>(), pt[1].get<double>()});
            }
            if (pl.points.size() < 2)
                throw StructuralError("polyline must have at least 2 points");
            for (const auto& p : pl.points)
                if (!tile.bounds.contains(p))
                    throw StructuralError("polyline point outside tile bounds");
            if (jp.contains("tags"))
                for (const auto& [k, v] : jp.at("tags").items())
                    pl.tags[k] = v.get<std::string>();
            tile.polylines.push_back(std::move(pl));
        }
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("bad tile JSON: ") + e.what());
    }
    return tile;
}

SDMapTile parse_osm_extract(const std::string& raw_bytes) {
    for (char c : raw_bytes) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c == '<') return parse_osm_xml(raw_bytes);
        if (c == '{') return parse_tile_json(raw_bytes);
        break;
    }
    throw ParseError("input is neither OSM XML ('<') nor a JSON tile ('{')", 1, 1);
}

std::string tile_to_json(const SDMapTile& tile) {
    nlohmann::json j;
    j["bounds"] = {tile.bounds.min_x, tile.bounds.min_y, tile.bounds.max_x, tile.bounds.max_y};
    j["polylines"] = nlohmann::json::array();
    for (const auto& pl : tile.polylines) {
        nlohmann::json jp;
        jp["points"] = nlohmann::json::array();
        for (const auto& p : pl.points) jp["points"].push_back({p.x, p.y});
        jp["tags"] = nlohmann::json::object();
        for (const auto& [k, v] : pl.tags) jp["tags"][k] = v;
        j["polylines"].push_back(std::move(jp));
    }
    return j.dump(2);
}

RoadTypeVector classify_road_type(const TagSet& tags) {
    static const std::map<std::string, RoadType> kHighwayValues = {
        {"footway", kPedestrian},   {"path", kPedestrian},
        {"crossing", kPedestrian},  {"pedestrian", kPedestrian},
        {"steps", kPedestrian},     {"motorway", kHighway},
        {"trunk", kHighway},        {"primary", kHighway},
        {"secondary", kHighway},    {"tertiary", kHighway},
        {"residential", kResidential}, {"living_street", kResidential},
        {"service", kService},      {"busway", kBusWay},
        {"bus_guideway", kBusWay},
    };

    RoadTypeVector v;
    auto hw = tags.find("highway");
    if (hw != tags.end()) {
        auto it = kHighwayValues.find(hw->second);
        if (it != kHighwayValues.end()) v.set(it->second);
    }
    auto hgv = tags.find("hgv");
    if (hgv != tags.end() && (hgv->second == "designated" || hgv->second == "yes"))
        v.set(kTruckRoad);
    if (v.count() == 0) v.set(kOther);
    return v;
}

Vec2 to_ego_frame(const Vec2& point_global, const EgoPose& pose) {
    const double dx = point_global.x - pose.x;
    const double dy = point_global.y - pose.y;
    const double c = std::cos(pose.heading);
    const double s = std::sin(pose.heading);
    // rotate by -heading
    return Vec2{c * dx + s * dy, -s * dx + c * dy};
}

namespace {

// Liang-Barsky clip of segment p->q against `r`, boundary inclusive.
// Returns the parameter interval [t0, t1] of the inside part, or nullopt.
std::optional<std::pair<double, double>> clip_segment(const Vec2& p, const Vec2& q,
                                                      const Rect& r) {
    const double dx = q.x - p.x;
    const double dy = q.y - p.y;
    double t0 = 0.0, t1 = 1.0;
    const double pk[4] = {-dx, dx, -dy, dy};
    const double qk[4] = {p.x - r.min_x, r.max_x - p.x, p.y - r.min_y, r.max_y - p.y};
    for (int i = 0; i < 4; ++i) {
        if (pk[i] == 0.0) {
            if (qk[i] < 0.0) return std::nullopt;
        } else {
            const double t = qk[i] / pk[i];
            if (pk[i] < 0.0) {
                if (t > t1) return std::nullopt;
                t0 = std::max(t0, t);
            } else {
                if (t < t0) return std::nullopt;
                t1 = std::min(t1, t);
            }
        }
    }
    if (t0 > t1) return std::nullopt;
    return std::make_pair(t0, t1);
}

Vec2 point_at(const Vec2& p, const Vec2& q, double t, const Rect& r) {
    if (t == 0.0) return p;
    if (t == 1.0) return q;
    Vec2 v{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
    // Snap rounding fuzz onto the boundary so clipping is idempotent.
    v.x = std::clamp(v.x, r.min_x, r.max_x);
    v.y = std::clamp(v.y, r.min_y, r.max_y);
    return v;
}

std::vector<Polyline2> clip_polyline(const Polyline2& pts, const Rect& r) {
    std::vector<Polyline2> pieces;
    Polyline2 cur;
    auto flush = [&] {
        if (cur.size() >= 2) pieces.push_back(cur);
        cur.clear();
    };
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        const Vec2& p = pts[i];
        const Vec2& q = pts[i + 1];
        auto span = clip_segment(p, q, r);
        if (!span) {
            flush();
            continue;
        }
        const auto [t0, t1] = *span;
        Vec2 a = point_at(p, q, t0, r);
        Vec2 b = point_at(p, q, t1, r);
        if (t0 > 0.0) flush();  // segment re-enters the window
        if (cur.empty()) cur.push_back(a);
        if (!(b == cur.back())) cur.push_back(b);
        if (t1 < 1.0) flush();  // segment exits the window
    }
    flush();
    return pieces;
}

}  // namespace

LocalSDMap query_local_map(const SDMapTile& tile, const EgoPose& pose, const BevRange& range) {
    if (!tile.polylines.empty() && !tile.bounds.contains(Vec2{pose.x, pose.y})) {
        std::ostringstream os;
        os << "ego position (" << pose.x << ", " << pose.y << ") outside tile bounds ["
           << tile.bounds.min_x << ", " << tile.bounds.min_y << "] x [" << tile.bounds.max_x
           << ", " << tile.bounds.max_y << "]";
        throw OutOfCoverageError(os.str());
    }
    const Rect window = range.rect();
    LocalSDMap out;
    for (size_t i = 0; i < tile.polylines.size(); ++i) {
        const auto& src = tile.polylines[i];
        Polyline2 ego_pts;
        ego_pts.reserve(src.points.size());
        for (const auto& p : src.points) ego_pts.push_back(to_ego_frame(p, pose));
        RoadTypeVector type = classify_road_type(src.tags);
        for (auto& piece : clip_polyline(ego_pts, window)) {
            out.polylines.push_back(LocalPolyline{std::move(piece), type, static_cast<int>(i)});
        }
    }
    return out;
}

std::map<std::string, RoadTypeHistogram> road_type_stats(
    const std::vector<std::pair<std::string, const SDMapTile*>>& tiles) {
    std::map<std::string, RoadTypeHistogram> out;
    for (const auto& [label, tile] : tiles) {
        auto& hist = out.try_emplace(label, RoadTypeHistogram{}).first->second;
        for (const auto& pl : tile->polylines) {
            RoadTypeVector v = classify_road_type(pl.tags);
            for (int k = 0; k < kRoadTypeCount; ++k)
                if (v.flags[k]) ++hist[k];
        }
    }
    return out;
}

std::map<std::string, RoadTypeHistogram> road_type_stats_local(
    const std::vector<std::pair<std::string, const LocalSDMap*>>& maps) {
    std::map<std::string, RoadTypeHistogram> out;
    for (const auto& [label, m] : maps) {
        auto& hist = out.try_emplace(label, RoadTypeHistogram{}).first->second;
        for (const auto& pl : m->polylines)
            for (int k = 0; k < kRoadTypeCount; ++k)
                if (pl.road_type.flags[k]) ++hist[k];
    }
    return out;
}

}  // namespace smerf::map
