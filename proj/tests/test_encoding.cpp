#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "smerf/encoding.hpp"

using namespace smerf;

namespace {

double arc_length(const Polyline2& pts) {
    double total = 0.0;
    for (size_t i = 1; i < pts.size(); ++i) total += distance(pts[i - 1], pts[i]);
    return total;
}

Polyline2 random_polyline(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> coord(-40.0, 40.0);
    Polyline2 pts;
    for (int i = 0; i < n; ++i) pts.push_back({coord(rng), coord(rng)});
    return pts;
}

}  // namespace

TEST_CASE("resampling spaces points uniformly and keeps endpoints") {
    std::mt19937 rng(404);
    for (int trial = 0; trial < 200; ++trial) {
        int src_n = 2 + static_cast<int>(rng() % 9);
        int dst_n = 2 + static_cast<int>(rng() % 30);
        Polyline2 src = random_polyline(rng, src_n);
        Polyline2 out = enc::resample_polyline(src, dst_n);

        REQUIRE(out.size() == static_cast<size_t>(dst_n));
        CHECK(distance(out.front(), src.front()) <= 1e-9);
        CHECK(distance(out.back(), src.back()) <= 1e-9);

        // Consecutive samples are equally spaced in arc length. For a polyline
        // the chord between adjacent samples can be shorter than the arc step
        // when it straddles a vertex, so compare arc positions instead:
        // sample i must sit at arc length i * L / (n - 1) along the source.
        double total = arc_length(src);
        double step = total / (dst_n - 1);
        double walked = 0.0;
        size_t seg = 1;
        for (int i = 0; i < dst_n; ++i) {
            double target = step * i;
            while (seg + 1 < src.size() &&
                   walked + distance(src[seg - 1], src[seg]) < target - 1e-12) {
                walked += distance(src[seg - 1], src[seg]);
                ++seg;
            }
            double seg_len = distance(src[seg - 1], src[seg]);
            double t = seg_len > 0 ? (target - walked) / seg_len : 0.0;
            t = std::min(std::max(t, 0.0), 1.0);
            Vec2 expect = src[seg - 1] + (src[seg] - src[seg - 1]) * t;
            CHECK(distance(out[static_cast<size_t>(i)], expect) <= 1e-9);
        }
    }
}

TEST_CASE("resampling a straight segment gives an arithmetic grid") {
    Polyline2 seg = {{0.0, 0.0}, {10.0, 0.0}};
    Polyline2 out = enc::resample_polyline(seg, 11);
    REQUIRE(out.size() == 11);
    for (int i = 0; i < 11; ++i) {
        CHECK(out[static_cast<size_t>(i)].x == doctest::Approx(i * 1.0).epsilon(1e-12));
        CHECK(out[static_cast<size_t>(i)].y == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("degenerate chains resample to a repeated point") {
    Polyline2 single = {{3.0, -2.0}};
    Polyline2 out = enc::resample_polyline(single, 5);
    REQUIRE(out.size() == 5);
    for (const auto& p : out) CHECK(p == Vec2{3.0, -2.0});

    Polyline2 zero_len = {{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}};
    out = enc::resample_polyline(zero_len, 4);
    REQUIRE(out.size() == 4);
    for (const auto& p : out) CHECK(p == Vec2{1.0, 1.0});

    CHECK_THROWS_AS(enc::resample_polyline({}, 3), std::invalid_argument);
}

TEST_CASE("BEV normalization maps the window onto [0, 2pi] per axis") {
    map::BevRange range;  // forward 50, backward 50, left 25, right 25
    constexpr double two_pi = 2.0 * std::numbers::pi;

    Vec2 lo = enc::normalize_to_bev({-50.0, -25.0}, range);
    CHECK(lo.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lo.y == doctest::Approx(0.0).epsilon(1e-12));

    Vec2 hi = enc::normalize_to_bev({50.0, 25.0}, range);
    CHECK(hi.x == doctest::Approx(two_pi).epsilon(1e-12));
    CHECK(hi.y == doctest::Approx(two_pi).epsilon(1e-12));

    Vec2 mid = enc::normalize_to_bev({0.0, 0.0}, range);
    CHECK(mid.x == doctest::Approx(std::numbers::pi).epsilon(1e-12));
    CHECK(mid.y == doctest::Approx(std::numbers::pi).epsilon(1e-12));

    // Asymmetric window: the affine map tracks each side independently.
    map::BevRange skew;
    skew.forward = 30.0;
    skew.backward = 10.0;
    skew.left = 20.0;
    skew.right = 5.0;
    Vec2 q = enc::normalize_to_bev({10.0, 7.5}, skew);
    CHECK(q.x == doctest::Approx(two_pi * 20.0 / 40.0).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(two_pi * 12.5 / 25.0).epsilon(1e-12));

    CHECK_THROWS_AS(enc::normalize_to_bev({50.0001, 0.0}, range), std::domain_error);
    CHECK_THROWS_AS(enc::normalize_to_bev({0.0, -25.0001}, range), std::domain_error);
}

TEST_CASE("sinusoidal embedding matches a high-precision reference") {
    // Document the worked example for the default setup: position 0.5,
    // d = 32, T = 1000. Pair j uses frequency T^(-2j/d).
    auto emb = enc::sinusoidal_embed(0.5, 32, 1000.0);
    REQUIRE(emb.size() == 32);
    CHECK(emb[0] == doctest::Approx(std::sin(0.5)).epsilon(1e-12));
    CHECK(emb[1] == doctest::Approx(std::cos(0.5)).epsilon(1e-12));
    double arg15 = 0.5 / std::pow(1000.0, 30.0 / 32.0);
    CHECK(emb[30] == doctest::Approx(std::sin(arg15)).epsilon(1e-12));
    CHECK(emb[31] == doctest::Approx(std::cos(arg15)).epsilon(1e-12));

    std::mt19937 rng(77);
    std::uniform_real_distribution<double> pos(0.0, 2.0 * std::numbers::pi);
    for (int trial = 0; trial < 500; ++trial) {
        double p = pos(rng);
        int d = 2 * (1 + static_cast<int>(rng() % 32));
        double temperature = (trial % 2 == 0) ? 1000.0 : 10.0;
        auto got = enc::sinusoidal_embed(p, d, temperature);
        auto want = oracle::sinusoidal_reference(p, d, temperature);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) <= 1e-6);
    }
}

TEST_CASE("sequence tensor has one row per polyline, width N*d + K") {
    enc::EncodingConfig config;
    CHECK(config.row_width() == 11 * 32 + 7);  // 359

    map::LocalSDMap local;
    map::LocalPolyline a;
    a.points = {{-20.0, 0.0}, {20.0, 0.0}};
    a.road_type.set(map::RoadType::kHighway);
    a.source_index = 4;
    map::LocalPolyline b;
    b.points = {{0.0, -10.0}, {0.0, 10.0}, {5.0, 15.0}};
    b.road_type.set(map::RoadType::kResidential);
    b.road_type.set(map::RoadType::kTruckRoad);
    b.source_index = 9;
    local.polylines = {a, b};

    auto tensor = enc::build_sequence_tensor(local, config);
    CHECK(tensor.rows == 2);
    CHECK(tensor.cols == 359);
    REQUIRE(tensor.data.size() == 2u * 359u);
    REQUIRE(tensor.row_polyline_ids.size() == 2);
    CHECK(tensor.row_polyline_ids[0] == 4);
    CHECK(tensor.row_polyline_ids[1] == 9);
}

TEST_CASE("tensor rows are x-embedding, y-embedding, then type flags") {
    enc::EncodingConfig config;
    config.points_per_polyline = 3;
    config.embed_dim = 4;

    map::LocalSDMap local;
    map::LocalPolyline lane;
    lane.points = {{-10.0, 5.0}, {10.0, 5.0}};
    lane.road_type.set(map::RoadType::kService);
    local.polylines = {lane};

    auto tensor = enc::build_sequence_tensor(local, config);
    REQUIRE(tensor.rows == 1);
    REQUIRE(tensor.cols == 3 * 4 + 7);

    // Resampled points: (-10,5), (0,5), (10,5). Each point contributes
    // d/2 = 2 x-values then 2 y-values, already BEV-normalized.
    Polyline2 expect_pts = {{-10.0, 5.0}, {0.0, 5.0}, {10.0, 5.0}};
    int col = 0;
    for (const auto& p : expect_pts) {
        Vec2 n = enc::normalize_to_bev(p, config.bev_range);
        auto ex = enc::sinusoidal_embed(n.x, 2, config.temperature);
        auto ey = enc::sinusoidal_embed(n.y, 2, config.temperature);
        for (double v : ex)
            CHECK(tensor.at(0, col++) == doctest::Approx(v).epsilon(1e-6));
        for (double v : ey)
            CHECK(tensor.at(0, col++) == doctest::Approx(v).epsilon(1e-6));
    }
    // Trailing K flags: only "service" set.
    for (int k = 0; k < map::kRoadTypeCount; ++k) {
        float want = (k == static_cast<int>(map::RoadType::kService)) ? 1.0f : 0.0f;
        CHECK(tensor.at(0, col + k) == want);
    }
}

TEST_CASE("encoding config validation rejects bad dimensions") {
    enc::EncodingConfig config;
    config.embed_dim = 5;  // must be even
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config.embed_dim = 32;
    config.points_per_polyline = 1;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
