#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "smerf/encoding.hpp"
#include "smerf/tape.hpp"

namespace smerf::nn {

struct EncoderConfig {
    int layers = 6;       // L
    int width = 256;      // H
    int heads = 4;
    int ffn_width = 0;    // 0 means 2*width
    int input_width = 11 * 32 + 7;  // N*d + K

    int resolved_ffn_width() const { return ffn_width > 0 ? ffn_width : 2 * width; }
    void validate() const;
};

struct LinearWeights {
    Mat w;  // in x out
    Mat b;  // 1 x out
};

struct LayerNormWeights {
    Mat gamma;  // 1 x dim
    Mat beta;   // 1 x dim
};

struct AttentionWeights {
    LinearWeights q, k, v, out;  // all width x width
};

struct EncoderLayerWeights {
    AttentionWeights attn;
    LayerNormWeights ln1;
    LinearWeights ffn1, ffn2;
    LayerNormWeights ln2;
};

struct EncoderWeights {
    LinearWeights input_proj;
    std::vector<EncoderLayerWeights> layers;
};

// One cross-attention fusion site (queries x map features), not shared
// across sites.
struct FusionWeights {
    AttentionWeights attn;
};

// M x H features with a per-row validity mask.
struct MapFeatures {
    Mat data;
    std::vector<uint8_t> valid;
};

using ParamVisitor = std::function<void(const std::string&, Mat&)>;

void visit_params(LinearWeights& w, const std::string& prefix, const ParamVisitor& f);
void visit_params(LayerNormWeights& w, const std::string& prefix, const ParamVisitor& f);
void visit_params(AttentionWeights& w, const std::string& prefix, const ParamVisitor& f);
void visit_params(EncoderWeights& w, const std::string& prefix, const ParamVisitor& f);
void visit_params(FusionWeights& w, const std::string& prefix, const ParamVisitor& f);

// Deterministic initialization: linear weights ~ U(-sqrt(1/fan_in),
// +sqrt(1/fan_in)) from a portable generator, biases 0, layer norm at
// identity.
EncoderWeights init_weights(const EncoderConfig& config, uint64_t seed);
FusionWeights init_fusion_weights(int width, uint64_t seed);

// Portable uniform stream used for all weight draws.
class UniformInit {
public:
    explicit UniformInit(uint64_t seed) : state_(seed) {}
    double next_unit();                  // [0, 1)
    double next_symmetric(double bound); // (-bound, bound)
    void fill_uniform(Mat& m, double bound);

private:
    uint64_t next_u64();
    uint64_t state_;
};

// Binds parameter matrices to tape leaves (one leaf per matrix per pass).
class ParamBinder {
public:
    explicit ParamBinder(Tape& tape) : tape_(&tape) {}

    Var bind(const Mat& m);
    const Mat& grad_of(const Mat& m) const;
    bool has(const Mat& m) const;
    const std::vector<std::pair<const Mat*, Var>>& entries() const { return entries_; }
    Tape& tape() { return *tape_; }

private:
    Tape* tape_;
    std::vector<std::pair<const Mat*, Var>> entries_;
};

// --- tape-level graph builders (shared by inference and training) ----------

// Multi-head attention: queries attend to keys/values; masked key rows are
// excluded from the softmax.
Var multi_head_attention_on_tape(Tape& tape, ParamBinder& params, Var queries, Var keys_values,
                                 const AttentionWeights& w, int heads,
                                 const std::vector<uint8_t>& key_mask);

// Post-norm encoder block: self-attention, residual, layer norm, GELU
// feed-forward, residual, layer norm.
Var encoder_block_on_tape(Tape& tape, ParamBinder& params, Var x,
                          const EncoderLayerWeights& w, int heads,
                          const std::vector<uint8_t>& mask);

Var encode_on_tape(Tape& tape, ParamBinder& params, Var input, const std::vector<uint8_t>& mask,
                   const EncoderWeights& w, const EncoderConfig& config);

// Cross-attention + residual. When no map row is unmasked the queries pass
// through unchanged (the contract requires bitwise identity).
Var map_cross_attention_on_tape(Tape& tape, ParamBinder& params, Var bev_queries,
                                Var map_features, const std::vector<uint8_t>& map_mask,
                                const FusionWeights& w, int heads);

// --- inference wrappers -----------------------------------------------------

// Runs the L-layer encoder over the polyline-sequence tensor. `mask` selects
// valid rows (empty mask = all valid). Throws on shape mismatch and on
// non-finite intermediates (naming the layer).
MapFeatures encode(const enc::PolylineSequenceTensor& tensor, const std::vector<uint8_t>& mask,
                   const EncoderWeights& weights, const EncoderConfig& config);

Mat map_cross_attention(const Mat& bev_queries, const MapFeatures& map_features,
                        const FusionWeights& weights, int heads);

}  // namespace smerf::nn
