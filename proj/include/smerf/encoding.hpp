#pragma once

#include <cstdint>
#include <vector>

#include "smerf/geometry.hpp"
#include "smerf/sdmap.hpp"

namespace smerf::enc {

// Polyline-sequence encoding parameters. `d` is the per-point embedding
// budget, split evenly between the x and y coordinate.
struct EncodingConfig {
    int points_per_polyline = 11;  // N
    int embed_dim = 32;            // d, even
    double temperature = 1000.0;   // T
    int road_type_dim = map::kRoadTypeCount;  // K
    map::BevRange bev_range;

    int row_width() const { return points_per_polyline * embed_dim + road_type_dim; }
    void validate() const;
};

// Row-major M x (N*d + K) matrix of 32-bit values, one row per polyline.
struct PolylineSequenceTensor {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;
    std::vector<int> row_polyline_ids;

    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// Resamples a point chain to exactly `n` points, evenly spaced by arc length,
// endpoints preserved. A single point or zero-length chain repeats the first
// point. Throws std::invalid_argument on an empty chain.
Polyline2 resample_polyline(const Polyline2& points, int n);

// Affine map of an in-range BEV point onto [0, 2*pi] per axis.
// Throws std::domain_error when the point lies outside the range.
Vec2 normalize_to_bev(const Vec2& point, const map::BevRange& range);

// Interleaved sin/cos embedding: out[2j] = sin(p / T^(2j/d)),
// out[2j+1] = cos(p / T^(2j/d)) for j in 0 .. d/2-1.
std::vector<double> sinusoidal_embed(double p, int d, double temperature);

// Full polyline-sequence representation of a local SD map: per polyline,
// resample to N points, normalize into the BEV window, embed x and y with
// d/2 values each, concatenate the N point embeddings and append the K
// road-type flags.
PolylineSequenceTensor build_sequence_tensor(const map::LocalSDMap& local_map,
                                             const EncodingConfig& config);

}  // namespace smerf::enc
