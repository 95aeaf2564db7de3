#pragma once

#include <cstdint>
#include <vector>

#include "smerf/encoding.hpp"
#include "smerf/metrics.hpp"
#include "smerf/scene.hpp"
#include "smerf/transformer.hpp"

namespace smerf::toy {

// Miniature lane predictor: an occlusion-masked evidence grid stands in for
// camera features; SD-map features enter through cross-attention fusion
// sites inside the BEV refiner.
struct ToyModelConfig {
    int grid_rows = 50;  // BEV query grid; must match the scenes' evidence grid
    int grid_cols = 25;
    int width = 32;      // H, divisible by 4 (positional features) and heads
    int heads = 2;
    int refine_layers = 2;
    int lane_queries = 16;
    bool use_sd_map = true;
    uint64_t seed = 0;
    int epochs = 30;
    double learning_rate = 1e-3;

    // SD-map branch: polyline encoding and its transformer encoder. The
    // encoder width must equal `width` so fusion operates in one space.
    enc::EncodingConfig encoding;
    int sd_encoder_layers = 2;

    map::BevRange bev_range;

    nn::EncoderConfig sd_encoder_config() const;
    void validate() const;
};

struct RefineLayerWeights {
    nn::AttentionWeights self_attn;
    nn::LayerNormWeights ln1;
    nn::FusionWeights fusion;  // active only when use_sd_map
    nn::LinearWeights ffn1, ffn2;
    nn::LayerNormWeights ln2;
};

struct ToyModel {
    ToyModelConfig config;

    nn::Mat evidence_w;  // 1 x H, scales the occupancy bit
    nn::Mat evidence_b;  // 1 x H
    nn::EncoderWeights sd_encoder;
    std::vector<RefineLayerWeights> refine;
    nn::Mat lane_queries;  // lane_queries x H, learned
    nn::AttentionWeights decoder_attn;
    nn::LayerNormWeights decoder_ln1;
    nn::LinearWeights decoder_ffn1, decoder_ffn2;
    nn::LayerNormWeights decoder_ln2;
    nn::LinearWeights head_points;      // H -> 33, output scaled by kPointScale
    nn::LinearWeights head_confidence;  // H -> 1 (logit)
    nn::Mat affinity_bilinear;          // H x H

    int64_t parameter_count() const;
};

inline constexpr double kPointScale = 25.0;  // meters per unit of the point head

void visit_params(ToyModel& model, const nn::ParamVisitor& f);

ToyModel init_toy_model(const ToyModelConfig& config);

// Forward pass on a tape (shared by training, prediction, and the
// finite-difference suite).
struct ToyForward {
    nn::Var points;       // lane_queries x 33 ([x,y,z] per point, meters)
    nn::Var conf_logits;  // lane_queries x 1
    nn::Var aff_logits;   // lane_queries x lane_queries
};
ToyForward toy_forward_on_tape(nn::Tape& tape, nn::ParamBinder& params, const ToyModel& model,
                               const ev::Scene& scene);

// Composite training loss: L1 on greedily matched points (weight 5),
// confidence BCE, affinity BCE over matched query pairs.
nn::Var toy_loss_on_tape(nn::Tape& tape, nn::ParamBinder& params, const ToyModel& model,
                         const ev::Scene& scene);

struct TrainLog {
    std::vector<double> epoch_loss;  // mean per-scene loss
};

struct TrainResult {
    ToyModel model;
    TrainLog log;
};

// Adam on the composite loss, one step per scene, scene order reshuffled
// every epoch from a seed substream. Deterministic given config.seed.
// Throws TrainingError naming the epoch when the loss goes non-finite.
TrainResult train(const std::vector<const ev::Scene*>& dataset, const ToyModelConfig& config);

// Deterministic inference; output fits the prediction-file schema (no
// traffic elements — the toy model has no image branch).
// Throws std::invalid_argument when the scene grid does not match the config.
ev::Prediction predict(const ToyModel& model, const ev::Scene& scene);

struct AblationRun {
    uint64_t seed = 0;
    ev::EvalReport fused;        // use_sd_map = true
    ev::EvalReport camera_only;  // use_sd_map = false
};

struct AblationSummary {
    std::vector<AblationRun> runs;
    double mean_far_det_l_fused = 0.0;
    double mean_far_det_l_camera = 0.0;
    int fused_far_wins = 0;  // seeds with fused far DET_l >= camera-only
};

// Trains both variants per seed on identical data and evaluates them (full
// report + breakdowns) on the validation set. Requires >= 3 seeds.
AblationSummary compare_ablation(const std::vector<const ev::Scene*>& train_set,
                                 const std::vector<const ev::Scene*>& val_set,
                                 const ToyModelConfig& base_config,
                                 const std::vector<uint64_t>& seeds);

}  // namespace smerf::toy
