#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "smerf/errors.hpp"
#include "smerf/transformer.hpp"

using namespace smerf;
using nn::Mat;

namespace {

nn::EncoderConfig small_config(int input_width = 12) {
    nn::EncoderConfig c;
    c.layers = 2;
    c.width = 16;
    c.heads = 2;
    c.input_width = input_width;
    return c;
}

enc::PolylineSequenceTensor random_tensor(std::mt19937& rng, int rows, int cols) {
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    enc::PolylineSequenceTensor t;
    t.rows = rows;
    t.cols = cols;
    t.data.resize(static_cast<size_t>(rows) * cols);
    for (auto& v : t.data) v = dist(rng);
    t.row_polyline_ids.resize(rows);
    std::iota(t.row_polyline_ids.begin(), t.row_polyline_ids.end(), 0);
    return t;
}

Mat random_mat(std::mt19937& rng, int rows, int cols, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (std::memcmp(&a(i, j), &b(i, j), sizeof(double)) != 0) return false;
    return true;
}

}  // namespace

TEST_CASE("encoder output shape is M x H, including edge sizes") {
    std::mt19937 rng(31);
    auto config = small_config();
    auto weights = nn::init_weights(config, 5);

    auto t3 = random_tensor(rng, 3, config.input_width);
    auto f3 = nn::encode(t3, {}, weights, config);
    CHECK(f3.data.rows() == 3);
    CHECK(f3.data.cols() == 16);
    CHECK(f3.valid == std::vector<uint8_t>{1, 1, 1});
    CHECK(f3.data.allFinite());

    auto t1 = random_tensor(rng, 1, config.input_width);
    auto f1 = nn::encode(t1, {}, weights, config);
    CHECK(f1.data.rows() == 1);
    CHECK(f1.data.allFinite());

    auto t0 = random_tensor(rng, 0, config.input_width);
    auto f0 = nn::encode(t0, {}, weights, config);
    CHECK(f0.data.rows() == 0);
    CHECK(f0.data.cols() == 16);
    CHECK(f0.valid.empty());
}

TEST_CASE("deterministic initialization and inference") {
    auto config = small_config();
    auto w1 = nn::init_weights(config, 42);
    auto w2 = nn::init_weights(config, 42);
    auto w3 = nn::init_weights(config, 43);

    bool same = true, differs = false;
    nn::visit_params(w1, "", [&](const std::string& name, Mat& m) {
        Mat* other = nullptr;
        nn::visit_params(w2, "", [&](const std::string& n2, Mat& m2) {
            if (n2 == name) other = &m2;
        });
        REQUIRE(other != nullptr);
        same = same && bitwise_equal(m, *other);
    });
    CHECK(same);
    nn::visit_params(w1, "", [&](const std::string& name, Mat& m) {
        nn::visit_params(w3, "", [&](const std::string& n2, Mat& m2) {
            if (n2 == name && !bitwise_equal(m, m2)) differs = true;
        });
    });
    CHECK(differs);

    std::mt19937 rng(32);
    auto t = random_tensor(rng, 4, config.input_width);
    auto a = nn::encode(t, {}, w1, config);
    auto b = nn::encode(t, {}, w1, config);
    CHECK(bitwise_equal(a.data, b.data));
}

TEST_CASE("uniform init respects the fan-in bound, biases zero, norms identity") {
    nn::EncoderConfig config;
    config.layers = 1;
    config.width = 4;
    config.heads = 1;
    config.input_width = 4;
    auto w = nn::init_weights(config, 9);
    // fan_in = 4 everywhere except ffn2 (fan_in = 8): bound sqrt(1/4) = 0.5.
    nn::visit_params(w, "", [&](const std::string& name, Mat& m) {
        if (name.find(".w") != std::string::npos) {
            double bound = std::sqrt(1.0 / m.rows()) + 1e-12;
            CHECK(m.cwiseAbs().maxCoeff() <= bound);
            if (m.rows() == 4) CHECK(m.cwiseAbs().maxCoeff() <= 0.5);
        } else if (name.find(".b") != std::string::npos ||
                   name.find("beta") != std::string::npos) {
            CHECK(m.cwiseAbs().maxCoeff() == 0.0);
        } else if (name.find("gamma") != std::string::npos) {
            CHECK((m.array() == 1.0).all());
        }
    });
}

TEST_CASE("permuting polylines permutes encoder outputs identically") {
    std::mt19937 rng(33);
    auto config = small_config();
    auto weights = nn::init_weights(config, 17);

    for (int trial = 0; trial < 25; ++trial) {
        int m = 2 + static_cast<int>(rng() % 5);
        auto t = random_tensor(rng, m, config.input_width);
        std::vector<uint8_t> mask(m, 1);
        if (m > 2) mask[rng() % m] = 0;

        std::vector<int> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);

        enc::PolylineSequenceTensor tp = t;
        std::vector<uint8_t> mask_p(m);
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < t.cols; ++c)
                tp.data[static_cast<size_t>(r) * t.cols + c] =
                    t.data[static_cast<size_t>(perm[r]) * t.cols + c];
            tp.row_polyline_ids[r] = t.row_polyline_ids[perm[r]];
            mask_p[r] = mask[perm[r]];
        }

        auto base = nn::encode(t, mask, weights, config);
        auto permuted = nn::encode(tp, mask_p, weights, config);
        for (int r = 0; r < m; ++r) {
            double diff =
                (permuted.data.row(r) - base.data.row(perm[r])).cwiseAbs().maxCoeff();
            CHECK(diff <= 1e-9);
        }
    }
}

TEST_CASE("appending masked rows leaves valid encoder outputs unchanged") {
    std::mt19937 rng(34);
    auto config = small_config();
    auto weights = nn::init_weights(config, 21);

    for (int trial = 0; trial < 25; ++trial) {
        int m = 1 + static_cast<int>(rng() % 4);
        int pad = 1 + static_cast<int>(rng() % 4);
        auto t = random_tensor(rng, m, config.input_width);
        std::vector<uint8_t> mask(m, 1);

        auto padded = random_tensor(rng, m + pad, config.input_width);
        std::copy(t.data.begin(), t.data.end(), padded.data.begin());
        std::vector<uint8_t> mask_padded(m + pad, 0);
        std::fill(mask_padded.begin(), mask_padded.begin() + m, 1);

        auto base = nn::encode(t, mask, weights, config);
        auto wide = nn::encode(padded, mask_padded, weights, config);
        double diff = (wide.data.topRows(m) - base.data).cwiseAbs().maxCoeff();
        CHECK(diff <= 1e-9);
        for (int r = 0; r < m + pad; ++r) CHECK(wide.valid[r] == mask_padded[r]);
    }
}

TEST_CASE("fusion with every map row masked returns the queries bitwise") {
    std::mt19937 rng(35);
    auto fusion = nn::init_fusion_weights(16, 3);
    for (int trial = 0; trial < 25; ++trial) {
        Mat queries = random_mat(rng, 2 + static_cast<int>(rng() % 6), 16, 3.0);
        nn::MapFeatures feats;
        feats.data = random_mat(rng, 1 + static_cast<int>(rng() % 5), 16);
        feats.valid.assign(static_cast<size_t>(feats.data.rows()), 0);
        Mat fused = nn::map_cross_attention(queries, feats, fusion, 2);
        CHECK(bitwise_equal(fused, queries));
    }

    // M = 0 behaves the same way.
    Mat queries = random_mat(rng, 3, 16);
    nn::MapFeatures empty;
    empty.data = Mat(0, 16);
    Mat fused = nn::map_cross_attention(queries, empty, fusion, 2);
    CHECK(bitwise_equal(fused, queries));
}

TEST_CASE("fusion with zero output projection is the identity") {
    std::mt19937 rng(36);
    auto fusion = nn::init_fusion_weights(8, 4);
    fusion.attn.out.w.setZero();
    fusion.attn.out.b.setZero();
    Mat queries = random_mat(rng, 4, 8);
    nn::MapFeatures feats;
    feats.data = random_mat(rng, 3, 8);
    feats.valid = {1, 1, 1};
    Mat fused = nn::map_cross_attention(queries, feats, fusion, 2);
    CHECK((fused - queries).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-head fusion matches a straight-line dense computation") {
    // 2 queries x 3 map rows, width 4, one head: attention reduces to
    // softmax(Q K^T / sqrt(4)) V followed by the output projection and the
    // residual. Recompute with plain Eigen expressions.
    std::mt19937 rng(37);
    const int h = 4;
    nn::FusionWeights w = nn::init_fusion_weights(h, 11);
    Mat queries = random_mat(rng, 2, h);
    nn::MapFeatures feats;
    feats.data = random_mat(rng, 3, h);
    feats.valid = {1, 1, 1};

    Mat got = nn::map_cross_attention(queries, feats, w, 1);

    auto apply = [](const nn::LinearWeights& lw, const Mat& x) -> Mat {
        return (x * lw.w).rowwise() + lw.b.row(0);
    };
    Mat q = apply(w.attn.q, queries);
    Mat k = apply(w.attn.k, feats.data);
    Mat v = apply(w.attn.v, feats.data);
    Mat logits = q * k.transpose() / std::sqrt(static_cast<double>(h));
    Mat probs(2, 3);
    for (int r = 0; r < 2; ++r) {
        double mx = logits.row(r).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
        probs.row(r) = e / e.sum();
    }
    Mat expect = queries + apply(w.attn.out, probs * v);
    CHECK((got - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("encoder and fusion gradients match central finite differences") {
    std::mt19937 rng(38);
    auto config = small_config(10);
    auto weights = nn::init_weights(config, 51);
    auto fusion = nn::init_fusion_weights(config.width, 52);

    const int m = 3;
    auto tensor = random_tensor(rng, m, config.input_width);
    std::vector<uint8_t> mask = {1, 1, 0};
    Mat queries = random_mat(rng, 4, config.width);
    Mat mix = random_mat(rng, 4, config.width);
    std::vector<uint8_t> fusion_mask = mask;

    // Forward: encoder -> fusion -> scalar. Shared by FD and the tape.
    auto eval = [&]() {
        auto feats = nn::encode(tensor, mask, weights, config);
        Mat fused = nn::map_cross_attention(queries, feats, fusion, config.heads);
        return (fused.array() * mix.array()).sum();
    };

    nn::Tape tape;
    nn::ParamBinder binder(tape);
    Mat input(m, config.input_width);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < config.input_width; ++c)
            input(r, c) = static_cast<double>(tensor.at(r, c));
    nn::Var in = tape.constant(input);
    nn::Var enc_out = nn::encode_on_tape(tape, binder, in, mask, weights, config);
    nn::Var q = binder.bind(queries);
    nn::Var fused =
        nn::map_cross_attention_on_tape(tape, binder, q, enc_out, fusion_mask, fusion, config.heads);
    tape.backward(fused, mix);

    int checked = 0;
    auto check_params = [&](auto& bundle, const std::string& tag) {
        nn::visit_params(bundle, tag, [&](const std::string& name, Mat& param) {
            Mat numeric = oracle::fd_gradient(param, eval);
            REQUIRE(binder.has(param));
            double err = oracle::max_rel_error(binder.grad_of(param), numeric);
            CAPTURE(name);
            CHECK(err < 1e-4);
            ++checked;
        });
    };
    check_params(weights, "encoder");
    check_params(fusion, "fusion");

    // BEV queries are inputs with gradients too.
    Mat numeric_q = oracle::fd_gradient(queries, eval);
    CHECK(oracle::max_rel_error(binder.grad_of(queries), numeric_q) < 1e-4);
    ++checked;

    // input proj (w, b) + 2 layers x 16 matrices + fusion attention x 8 + queries.
    CHECK(checked == 2 + 32 + 8 + 1);
}

TEST_CASE("shape and mask mismatches are rejected") {
    std::mt19937 rng(39);
    auto config = small_config();
    auto weights = nn::init_weights(config, 61);
    auto t = random_tensor(rng, 3, config.input_width + 1);
    CHECK_THROWS_AS(nn::encode(t, {}, weights, config), std::invalid_argument);

    auto ok = random_tensor(rng, 3, config.input_width);
    CHECK_THROWS_AS(nn::encode(ok, {1, 1}, weights, config), std::invalid_argument);

    nn::MapFeatures feats;
    feats.data = random_mat(rng, 2, 8);  // width 8 != 16
    feats.valid = {1, 1};
    Mat queries = random_mat(rng, 2, 16);
    auto fusion = nn::init_fusion_weights(16, 1);
    CHECK_THROWS_AS(nn::map_cross_attention(queries, feats, fusion, 2),
                    std::invalid_argument);
}

TEST_CASE("non-finite intermediates raise a numeric error naming the layer") {
    std::mt19937 rng(40);
    auto config = small_config();
    auto weights = nn::init_weights(config, 71);
    weights.layers[1].ffn1.w(0, 0) = std::numeric_limits<double>::quiet_NaN();
    auto t = random_tensor(rng, 2, config.input_width);
    try {
        nn::encode(t, {}, weights, config);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}
