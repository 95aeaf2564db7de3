#include "smerf/toy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "smerf/errors.hpp"
#include "smerf/rng.hpp"

namespace smerf::toy {

using nn::Mat;
using nn::ParamBinder;
using nn::Tape;
using nn::Var;

nn::EncoderConfig ToyModelConfig::sd_encoder_config() const {
    nn::EncoderConfig c;
    c.layers = sd_encoder_layers;
    c.width = width;
    c.heads = heads;
    c.input_width = encoding.row_width();
    return c;
}

void ToyModelConfig::validate() const {
    if (grid_rows < 1 || grid_cols < 1) throw std::invalid_argument("toy: grid dims must be >= 1");
    if (width < 4 || width % 4 != 0)
        throw std::invalid_argument("toy: width must be a positive multiple of 4");
    if (width % heads != 0) throw std::invalid_argument("toy: width must be divisible by heads");
    if (refine_layers < 0) throw std::invalid_argument("toy: refine_layers must be >= 0");
    if (lane_queries < 1) throw std::invalid_argument("toy: lane_queries must be >= 1");
    if (epochs < 0) throw std::invalid_argument("toy: epochs must be >= 0");
    if (learning_rate < 0.0) throw std::invalid_argument("toy: learning_rate must be >= 0");
    if (sd_encoder_layers < 1) throw std::invalid_argument("toy: sd_encoder_layers must be >= 1");
    encoding.validate();
    sd_encoder_config().validate();
}

void visit_params(ToyModel& m, const nn::ParamVisitor& f) {
    f("evidence.w", m.evidence_w);
    f("evidence.b", m.evidence_b);
    nn::visit_params(m.sd_encoder, "sd_encoder", f);
    for (size_t i = 0; i < m.refine.size(); ++i) {
        const std::string p = "refine" + std::to_string(i);
        nn::visit_params(m.refine[i].self_attn, p + ".attn", f);
        nn::visit_params(m.refine[i].ln1, p + ".ln1", f);
        nn::visit_params(m.refine[i].fusion, p + ".fusion", f);
        nn::visit_params(m.refine[i].ffn1, p + ".ffn1", f);
        nn::visit_params(m.refine[i].ffn2, p + ".ffn2", f);
        nn::visit_params(m.refine[i].ln2, p + ".ln2", f);
    }
    f("lane_queries", m.lane_queries);
    nn::visit_params(m.decoder_attn, "decoder.attn", f);
    nn::visit_params(m.decoder_ln1, "decoder.ln1", f);
    nn::visit_params(m.decoder_ffn1, "decoder.ffn1", f);
    nn::visit_params(m.decoder_ffn2, "decoder.ffn2", f);
    nn::visit_params(m.decoder_ln2, "decoder.ln2", f);
    nn::visit_params(m.head_points, "head.points", f);
    nn::visit_params(m.head_confidence, "head.confidence", f);
    f("affinity.bilinear", m.affinity_bilinear);
}

int64_t ToyModel::parameter_count() const {
    int64_t n = 0;
    visit_params(const_cast<ToyModel&>(*this),
                 [&](const std::string&, Mat& m) { n += m.size(); });
    return n;
}

namespace {

nn::LinearWeights make_linear(int in, int out, nn::UniformInit& rng) {
    nn::LinearWeights w;
    w.w = Mat(in, out);
    rng.fill_uniform(w.w, std::sqrt(1.0 / in));
    w.b = Mat::Zero(1, out);
    return w;
}

nn::LayerNormWeights make_layer_norm(int dim) {
    return nn::LayerNormWeights{Mat::Ones(1, dim), Mat::Zero(1, dim)};
}

nn::AttentionWeights make_attention(int width, nn::UniformInit& rng) {
    return nn::AttentionWeights{make_linear(width, width, rng), make_linear(width, width, rng),
                                make_linear(width, width, rng), make_linear(width, width, rng)};
}

Var linear_on_tape(Tape& tape, ParamBinder& params, Var x, const nn::LinearWeights& w) {
    return tape.add_row_broadcast(tape.matmul(x, params.bind(w.w)), params.bind(w.b));
}

// Fixed (non-learned) sinusoidal position features of the BEV grid cells.
Mat positional_features(const ToyModelConfig& c) {
    const int q_count = c.grid_rows * c.grid_cols;
    const int half = c.width / 2;
    Mat p(q_count, c.width);
    const double span_x = c.bev_range.backward + c.bev_range.forward;
    const double span_y = c.bev_range.right + c.bev_range.left;
    for (int r = 0; r < c.grid_rows; ++r) {
        for (int col = 0; col < c.grid_cols; ++col) {
            const double cx = -c.bev_range.backward + (r + 0.5) * span_x / c.grid_rows;
            const double cy = -c.bev_range.right + (col + 0.5) * span_y / c.grid_cols;
            const Vec2 norm = enc::normalize_to_bev({cx, cy}, c.bev_range);
            const auto ex = enc::sinusoidal_embed(norm.x, half, c.encoding.temperature);
            const auto ey = enc::sinusoidal_embed(norm.y, half, c.encoding.temperature);
            const int q = r * c.grid_cols + col;
            for (int k = 0; k < half; ++k) {
                p(q, k) = ex[k];
                p(q, half + k) = ey[k];
            }
        }
    }
    return p;
}

}  // namespace

ToyModel init_toy_model(const ToyModelConfig& config) {
    config.validate();
    ToyModel m;
    m.config = config;
    const int h = config.width;

    nn::UniformInit rng(substream(config.seed, "toy_init"));
    m.evidence_w = Mat(1, h);
    rng.fill_uniform(m.evidence_w, 1.0);
    m.evidence_b = Mat::Zero(1, h);

    m.sd_encoder = nn::init_weights(config.sd_encoder_config(),
                                    substream(config.seed, "toy_sd_encoder"));

    m.refine.resize(config.refine_layers);
    for (auto& layer : m.refine) {
        layer.self_attn = make_attention(h, rng);
        layer.ln1 = make_layer_norm(h);
        layer.fusion = nn::FusionWeights{make_attention(h, rng)};
        layer.ffn1 = make_linear(h, 2 * h, rng);
        layer.ffn2 = make_linear(2 * h, h, rng);
        layer.ln2 = make_layer_norm(h);
    }

    m.lane_queries = Mat(config.lane_queries, h);
    rng.fill_uniform(m.lane_queries, std::sqrt(1.0 / h));
    m.decoder_attn = make_attention(h, rng);
    m.decoder_ln1 = make_layer_norm(h);
    m.decoder_ffn1 = make_linear(h, 2 * h, rng);
    m.decoder_ffn2 = make_linear(2 * h, h, rng);
    m.decoder_ln2 = make_layer_norm(h);
    m.head_points = make_linear(h, 3 * ev::kLanePointCount, rng);
    m.head_confidence = make_linear(h, 1, rng);
    m.affinity_bilinear = Mat(h, h);
    rng.fill_uniform(m.affinity_bilinear, std::sqrt(1.0 / h));
    return m;
}

ToyForward toy_forward_on_tape(Tape& tape, ParamBinder& params, const ToyModel& model,
                               const ev::Scene& scene) {
    const auto& c = model.config;
    if (scene.evidence.rows != c.grid_rows || scene.evidence.cols != c.grid_cols)
        throw std::invalid_argument("toy: scene evidence grid " +
                                    std::to_string(scene.evidence.rows) + "x" +
                                    std::to_string(scene.evidence.cols) +
                                    " does not match config grid " +
                                    std::to_string(c.grid_rows) + "x" +
                                    std::to_string(c.grid_cols));
    const int q_count = c.grid_rows * c.grid_cols;

    Mat ev_col(q_count, 1);
    for (int i = 0; i < q_count; ++i) ev_col(i, 0) = scene.evidence.cells[i];
    Var x = tape.add(tape.constant(positional_features(c)),
                     tape.matmul(tape.constant(ev_col), params.bind(model.evidence_w)));
    x = tape.add_row_broadcast(x, params.bind(model.evidence_b));

    // SD-map branch (skipped entirely for the camera-only ablation, so the
    // output is bitwise independent of the map content).
    Var map_feats;
    std::vector<uint8_t> map_mask;
    if (c.use_sd_map && scene.sd_map.size() > 0) {
        const auto tensor = enc::build_sequence_tensor(scene.sd_map, c.encoding);
        Mat input(tensor.rows, tensor.cols);
        for (int r = 0; r < tensor.rows; ++r)
            for (int col = 0; col < tensor.cols; ++col) input(r, col) = tensor.at(r, col);
        map_mask.assign(tensor.rows, 1);
        map_feats = nn::encode_on_tape(tape, params, tape.constant(std::move(input)), map_mask,
                                       model.sd_encoder, c.sd_encoder_config());
    }

    const std::vector<uint8_t> bev_mask(q_count, 1);
    for (const auto& layer : model.refine) {
        Var attn =
            nn::multi_head_attention_on_tape(tape, params, x, x, layer.self_attn, c.heads, bev_mask);
        x = tape.layer_norm_rows(tape.add(x, attn), params.bind(layer.ln1.gamma),
                                 params.bind(layer.ln1.beta));
        if (map_feats.valid())
            x = nn::map_cross_attention_on_tape(tape, params, x, map_feats, map_mask,
                                                layer.fusion, c.heads);
        Var f = linear_on_tape(tape, params,
                               tape.gelu(linear_on_tape(tape, params, x, layer.ffn1)),
                               layer.ffn2);
        x = tape.layer_norm_rows(tape.add(x, f), params.bind(layer.ln2.gamma),
                                 params.bind(layer.ln2.beta));
    }

    Var queries = params.bind(model.lane_queries);
    Var attn = nn::multi_head_attention_on_tape(tape, params, queries, x, model.decoder_attn,
                                                c.heads, bev_mask);
    Var d = tape.layer_norm_rows(tape.add(queries, attn), params.bind(model.decoder_ln1.gamma),
                                 params.bind(model.decoder_ln1.beta));
    Var f = linear_on_tape(tape, params,
                           tape.gelu(linear_on_tape(tape, params, d, model.decoder_ffn1)),
                           model.decoder_ffn2);
    d = tape.layer_norm_rows(tape.add(d, f), params.bind(model.decoder_ln2.gamma),
                             params.bind(model.decoder_ln2.beta));

    ToyForward out;
    out.points = tape.scale(linear_on_tape(tape, params, d, model.head_points), kPointScale);
    out.conf_logits = linear_on_tape(tape, params, d, model.head_confidence);
    out.aff_logits =
        tape.matmul_nt(tape.matmul(d, params.bind(model.affinity_bilinear)), d);
    return out;
}

namespace {

// Greedy global-minimum assignment of lane queries to ground-truth lanes by
// summed point distance; ties by (query id, gt id).
std::vector<std::pair<int, int>> match_queries(const Mat& pred_points,
                                               const std::vector<ev::LaneCenterline>& gt) {
    const int q = static_cast<int>(pred_points.rows());
    const int g = static_cast<int>(gt.size());
    Mat dist(q, g);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < g; ++j) {
            double sum = 0.0;
            for (int k = 0; k < ev::kLanePointCount; ++k) {
                const double dx = pred_points(i, 3 * k) - gt[j].points[k].x;
                const double dy = pred_points(i, 3 * k + 1) - gt[j].points[k].y;
                const double dz = pred_points(i, 3 * k + 2) - gt[j].points[k].z;
                sum += std::sqrt(dx * dx + dy * dy + dz * dz);
            }
            dist(i, j) = sum;
        }

    std::vector<uint8_t> q_used(q, 0), g_used(g, 0);
    std::vector<std::pair<int, int>> pairs;
    const int n_pairs = std::min(q, g);
    for (int step = 0; step < n_pairs; ++step) {
        double best = std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (int i = 0; i < q; ++i) {
            if (q_used[i]) continue;
            for (int j = 0; j < g; ++j) {
                if (g_used[j]) continue;
                if (dist(i, j) < best) {
                    best = dist(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        q_used[bi] = 1;
        g_used[bj] = 1;
        pairs.emplace_back(bi, bj);
    }
    return pairs;
}

}  // namespace

nn::Var toy_loss_on_tape(Tape& tape, ParamBinder& params, const ToyModel& model,
                         const ev::Scene& scene) {
    const ToyForward fwd = toy_forward_on_tape(tape, params, model, scene);
    const int q = model.config.lane_queries;
    const auto pairs = match_queries(tape.value(fwd.points), scene.gt_lanes);
    const int n_matched = static_cast<int>(pairs.size());

    Mat point_target = Mat::Zero(q, 3 * ev::kLanePointCount);
    Mat point_weight = Mat::Zero(q, 3 * ev::kLanePointCount);
    const double point_w = n_matched > 0 ? 5.0 / (n_matched * 3.0 * ev::kLanePointCount) : 0.0;
    for (const auto& [qi, gi] : pairs) {
        for (int k = 0; k < ev::kLanePointCount; ++k) {
            const auto& p = scene.gt_lanes[gi].points[k];
            point_target(qi, 3 * k) = p.x;
            point_target(qi, 3 * k + 1) = p.y;
            point_target(qi, 3 * k + 2) = p.z;
        }
        point_weight.row(qi).setConstant(point_w);
    }

    Mat conf_target = Mat::Zero(q, 1);
    for (const auto& [qi, gi] : pairs) conf_target(qi, 0) = 1.0;
    Mat conf_weight = Mat::Constant(q, 1, 1.0 / q);

    Mat aff_target = Mat::Zero(q, q);
    Mat aff_weight = Mat::Zero(q, q);
    if (n_matched > 1) {
        const double aff_w = 1.0 / (static_cast<double>(n_matched) * (n_matched - 1));
        for (const auto& [qi, gi] : pairs)
            for (const auto& [qj, gj] : pairs) {
                if (qi == qj) continue;
                aff_target(qi, qj) = scene.ll_affinity(gi, gj);
                aff_weight(qi, qj) = aff_w;
            }
    }

    Var loss = tape.l1_loss(fwd.points, std::move(point_target), std::move(point_weight));
    loss = tape.add(loss,
                    tape.bce_with_logits(fwd.conf_logits, std::move(conf_target),
                                         std::move(conf_weight)));
    loss = tape.add(loss, tape.bce_with_logits(fwd.aff_logits, std::move(aff_target),
                                               std::move(aff_weight)));
    return loss;
}

TrainResult train(const std::vector<const ev::Scene*>& dataset, const ToyModelConfig& config) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("toy train: empty dataset");

    TrainResult result;
    result.model = init_toy_model(config);
    ToyModel& model = result.model;

    // Adam state per parameter, in the stable visit order.
    struct Slot {
        Mat* param;
        Mat m, v;
    };
    std::vector<Slot> slots;
    visit_params(model, [&](const std::string&, Mat& p) {
        slots.push_back({&p, Mat::Zero(p.rows(), p.cols()), Mat::Zero(p.rows(), p.cols())});
    });
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;

    Rng shuffle_rng(substream(config.seed, "epoch_shuffle"));
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (int idx : order) {
            Tape tape;
            ParamBinder params(tape);
            Var loss = toy_loss_on_tape(tape, params, model, *dataset[idx]);
            const double loss_value = tape.value(loss)(0, 0);
            if (!std::isfinite(loss_value))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += loss_value;
            tape.backward(loss);

            ++t;
            const double corr1 = 1.0 - std::pow(beta1, t);
            const double corr2 = 1.0 - std::pow(beta2, t);
            for (auto& slot : slots) {
                if (!params.has(*slot.param)) continue;  // unused this step
                const Mat& g = params.grad_of(*slot.param);
                slot.m = beta1 * slot.m + (1.0 - beta1) * g;
                slot.v = beta2 * slot.v + (1.0 - beta2) * g.cwiseProduct(g);
                const Mat m_hat = slot.m / corr1;
                const Mat v_hat = slot.v / corr2;
                *slot.param -=
                    config.learning_rate *
                    (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
            }
        }
        result.log.epoch_loss.push_back(loss_sum / dataset.size());
    }
    return result;
}

ev::Prediction predict(const ToyModel& model, const ev::Scene& scene) {
    Tape tape;
    ParamBinder params(tape);
    const ToyForward fwd = toy_forward_on_tape(tape, params, model, scene);
    const Mat& points = tape.value(fwd.points);
    const Mat& conf = tape.value(fwd.conf_logits);
    const Mat& aff = tape.value(fwd.aff_logits);

    auto sigmoid = [](double z) {
        return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    };

    ev::Prediction pred;
    const int q = model.config.lane_queries;
    pred.lanes.reserve(q);
    for (int i = 0; i < q; ++i) {
        ev::LaneCenterline lane;
        lane.id = i;
        lane.confidence = sigmoid(conf(i, 0));
        for (int k = 0; k < ev::kLanePointCount; ++k)
            lane.points.push_back(
                {points(i, 3 * k), points(i, 3 * k + 1), points(i, 3 * k + 2)});
        pred.lanes.push_back(std::move(lane));
    }
    pred.ll_affinity = Eigen::MatrixXd(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) pred.ll_affinity(i, j) = sigmoid(aff(i, j));
    pred.lt_affinity = Eigen::MatrixXd(q, 0);
    return pred;
}

AblationSummary compare_ablation(const std::vector<const ev::Scene*>& train_set,
                                 const std::vector<const ev::Scene*>& val_set,
                                 const ToyModelConfig& base_config,
                                 const std::vector<uint64_t>& seeds) {
    if (seeds.size() < 3)
        throw std::invalid_argument("compare_ablation: need at least 3 seeds");
    if (val_set.empty()) throw std::invalid_argument("compare_ablation: empty validation set");

    AblationSummary summary;
    for (uint64_t seed : seeds) {
        AblationRun run;
        run.seed = seed;
        for (bool fused : {true, false}) {
            ToyModelConfig cfg = base_config;
            cfg.seed = seed;
            cfg.use_sd_map = fused;
            TrainResult trained = train(train_set, cfg);

            std::vector<ev::Prediction> preds;
            preds.reserve(val_set.size());
            for (const auto* scene : val_set) preds.push_back(predict(trained.model, *scene));
            std::vector<const ev::Prediction*> pred_ptrs;
            for (const auto& p : preds) pred_ptrs.push_back(&p);
            const ev::EvalReport report = ev::evaluate_set(val_set, pred_ptrs, {true});
            (fused ? run.fused : run.camera_only) = report;
        }
        summary.runs.push_back(std::move(run));
    }

    for (const auto& run : summary.runs) {
        const double f = run.fused.breakdowns.at("far").det_l;
        const double c = run.camera_only.breakdowns.at("far").det_l;
        summary.mean_far_det_l_fused += f;
        summary.mean_far_det_l_camera += c;
        if (f >= c) ++summary.fused_far_wins;
    }
    summary.mean_far_det_l_fused /= summary.runs.size();
    summary.mean_far_det_l_camera /= summary.runs.size();
    return summary;
}

}  // namespace smerf::toy
