#include "smerf/encoding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace smerf::enc {

void EncodingConfig::validate() const {
    if (points_per_polyline < 2) throw std::invalid_argument("N must be >= 2");
    if (embed_dim < 2 || embed_dim % 2 != 0) throw std::invalid_argument("d must be even and >= 2");
    if (temperature <= 0.0) throw std::invalid_argument("T must be > 0");
    if (road_type_dim < 1) throw std::invalid_argument("K must be >= 1");
}

Polyline2 resample_polyline(const Polyline2& points, int n) {
    if (points.empty()) throw std::invalid_argument("resample_polyline: empty input");
    if (n < 1) throw std::invalid_argument("resample_polyline: n must be >= 1");

    // Cumulative arc length along the chain.
    std::vector<double> cum(points.size(), 0.0);
    for (size_t i = 1; i < points.size(); ++i)
        cum[i] = cum[i - 1] + distance(points[i - 1], points[i]);
    const double total = cum.back();

    Polyline2 out;
    out.reserve(n);
    if (points.size() == 1 || total == 0.0) {
        out.assign(n, points.front());
        return out;
    }
    if (n == 1) {
        out.push_back(points.front());
        return out;
    }

    size_t seg = 0;
    for (int k = 0; k < n; ++k) {
        if (k == 0) {
            out.push_back(points.front());
            continue;
        }
        if (k == n - 1) {
            out.push_back(points.back());
            continue;
        }
        const double target = total * static_cast<double>(k) / static_cast<double>(n - 1);
        while (seg + 1 < points.size() - 1 && cum[seg + 1] < target) ++seg;
        const double seg_len = cum[seg + 1] - cum[seg];
        const double t = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
        out.push_back(points[seg] + (points[seg + 1] - points[seg]) * t);
    }
    return out;
}

Vec2 normalize_to_bev(const Vec2& point, const map::BevRange& range) {
    const double sx = range.backward + range.forward;
    const double sy = range.right + range.left;
    if (point.x < -range.backward || point.x > range.forward || point.y < -range.right ||
        point.y > range.left)
        throw std::domain_error("normalize_to_bev: point (" + std::to_string(point.x) + ", " +
                                std::to_string(point.y) + ") outside BEV range");
    return Vec2{2.0 * M_PI * (point.x + range.backward) / sx,
                2.0 * M_PI * (point.y + range.right) / sy};
}

std::vector<double> sinusoidal_embed(double p, int d, double temperature) {
    if (d < 2 || d % 2 != 0) throw std::invalid_argument("sinusoidal_embed: d must be even >= 2");
    std::vector<double> out(d);
    for (int j = 0; j < d / 2; ++j) {
        const double freq = std::pow(temperature, 2.0 * j / static_cast<double>(d));
        out[2 * j] = std::sin(p / freq);
        out[2 * j + 1] = std::cos(p / freq);
    }
    return out;
}

PolylineSequenceTensor build_sequence_tensor(const map::LocalSDMap& local_map,
                                             const EncodingConfig& config) {
    config.validate();
    const int n = config.points_per_polyline;
    const int d = config.embed_dim;
    const int k = config.road_type_dim;
    if ((d / 2) % 2 != 0)
        throw std::invalid_argument(
            "build_sequence_tensor: the per-point x/y split requires d divisible by 4");

    PolylineSequenceTensor t;
    t.rows = local_map.size();
    t.cols = config.row_width();
    t.data.resize(static_cast<size_t>(t.rows) * t.cols);
    t.row_polyline_ids.resize(t.rows);

    for (int r = 0; r < t.rows; ++r) {
        const auto& pl = local_map.polylines[r];
        t.row_polyline_ids[r] = pl.source_index >= 0 ? pl.source_index : r;
        float* row = t.data.data() + static_cast<size_t>(r) * t.cols;
        const Polyline2 pts = resample_polyline(pl.points, n);
        int col = 0;
        for (const auto& p : pts) {
            const Vec2 q = normalize_to_bev(p, config.bev_range);
            for (double v : sinusoidal_embed(q.x, d / 2, config.temperature))
                row[col++] = static_cast<float>(v);
            for (double v : sinusoidal_embed(q.y, d / 2, config.temperature))
                row[col++] = static_cast<float>(v);
        }
        for (int i = 0; i < k; ++i)
            row[col++] = i < map::kRoadTypeCount ? static_cast<float>(pl.road_type.flags[i]) : 0.0f;
    }
    return t;
}

}  // namespace smerf::enc
