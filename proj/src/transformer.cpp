#include "smerf/transformer.hpp"

#include <cmath>
#include <stdexcept>

#include "smerf/errors.hpp"

namespace smerf::nn {

void EncoderConfig::validate() const {
    if (layers < 1 || width < 1 || heads < 1 || input_width < 1)
        throw std::invalid_argument("EncoderConfig: all dims must be >= 1");
    if (width % heads != 0)
        throw std::invalid_argument("EncoderConfig: width must be divisible by heads");
}

void visit_params(LinearWeights& w, const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".w", w.w);
    f(prefix + ".b", w.b);
}

void visit_params(LayerNormWeights& w, const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".gamma", w.gamma);
    f(prefix + ".beta", w.beta);
}

void visit_params(AttentionWeights& w, const std::string& prefix, const ParamVisitor& f) {
    visit_params(w.q, prefix + ".q", f);
    visit_params(w.k, prefix + ".k", f);
    visit_params(w.v, prefix + ".v", f);
    visit_params(w.out, prefix + ".out", f);
}

void visit_params(EncoderWeights& w, const std::string& prefix, const ParamVisitor& f) {
    visit_params(w.input_proj, prefix + ".input_proj", f);
    for (size_t i = 0; i < w.layers.size(); ++i) {
        const std::string lp = prefix + ".layer" + std::to_string(i);
        visit_params(w.layers[i].attn, lp + ".attn", f);
        visit_params(w.layers[i].ln1, lp + ".ln1", f);
        visit_params(w.layers[i].ffn1, lp + ".ffn1", f);
        visit_params(w.layers[i].ffn2, lp + ".ffn2", f);
        visit_params(w.layers[i].ln2, lp + ".ln2", f);
    }
}

void visit_params(FusionWeights& w, const std::string& prefix, const ParamVisitor& f) {
    visit_params(w.attn, prefix + ".attn", f);
}

// splitmix64; portable across platforms, unlike std::uniform_real_distribution
uint64_t UniformInit::next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double UniformInit::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double UniformInit::next_symmetric(double bound) {
    return (2.0 * next_unit() - 1.0) * bound;
}

void UniformInit::fill_uniform(Mat& m, double bound) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = next_symmetric(bound);
}

namespace {

LinearWeights make_linear(int in, int out, UniformInit& rng) {
    LinearWeights w;
    w.w = Mat(in, out);
    rng.fill_uniform(w.w, std::sqrt(1.0 / in));
    w.b = Mat::Zero(1, out);
    return w;
}

LayerNormWeights make_layer_norm(int dim) {
    return LayerNormWeights{Mat::Ones(1, dim), Mat::Zero(1, dim)};
}

AttentionWeights make_attention(int width, UniformInit& rng) {
    return AttentionWeights{make_linear(width, width, rng), make_linear(width, width, rng),
                            make_linear(width, width, rng), make_linear(width, width, rng)};
}

}  // namespace

EncoderWeights init_weights(const EncoderConfig& config, uint64_t seed) {
    config.validate();
    UniformInit rng(seed);
    EncoderWeights w;
    w.input_proj = make_linear(config.input_width, config.width, rng);
    w.layers.resize(config.layers);
    for (auto& layer : w.layers) {
        layer.attn = make_attention(config.width, rng);
        layer.ln1 = make_layer_norm(config.width);
        layer.ffn1 = make_linear(config.width, config.resolved_ffn_width(), rng);
        layer.ffn2 = make_linear(config.resolved_ffn_width(), config.width, rng);
        layer.ln2 = make_layer_norm(config.width);
    }
    return w;
}

FusionWeights init_fusion_weights(int width, uint64_t seed) {
    UniformInit rng(seed);
    return FusionWeights{make_attention(width, rng)};
}

Var ParamBinder::bind(const Mat& m) {
    for (const auto& [ptr, var] : entries_)
        if (ptr == &m) return var;
    Var v = tape_->leaf(m, true);
    entries_.emplace_back(&m, v);
    return v;
}

const Mat& ParamBinder::grad_of(const Mat& m) const {
    for (const auto& [ptr, var] : entries_)
        if (ptr == &m) return tape_->grad(var);
    throw std::invalid_argument("ParamBinder: matrix was never bound");
}

bool ParamBinder::has(const Mat& m) const {
    for (const auto& [ptr, var] : entries_)
        if (ptr == &m) return true;
    return false;
}

namespace {

Var linear_on_tape(Tape& tape, ParamBinder& params, Var x, const LinearWeights& w) {
    return tape.add_row_broadcast(tape.matmul(x, params.bind(w.w)), params.bind(w.b));
}

}  // namespace

Var multi_head_attention_on_tape(Tape& tape, ParamBinder& params, Var queries, Var keys_values,
                                 const AttentionWeights& w, int heads,
                                 const std::vector<uint8_t>& key_mask) {
    const int width = static_cast<int>(tape.value(queries).cols());
    if (tape.value(keys_values).cols() != width)
        throw std::invalid_argument("attention: query/key width mismatch");
    if (width % heads != 0)
        throw std::invalid_argument("attention: width not divisible by heads");
    if (static_cast<Eigen::Index>(key_mask.size()) != tape.value(keys_values).rows())
        throw std::invalid_argument("attention: mask length != key rows");

    const int head_dim = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Var q = linear_on_tape(tape, params, queries, w.q);
    Var k = linear_on_tape(tape, params, keys_values, w.k);
    Var v = linear_on_tape(tape, params, keys_values, w.v);

    std::vector<Var> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Var qh = tape.slice_cols(q, h * head_dim, head_dim);
        Var kh = tape.slice_cols(k, h * head_dim, head_dim);
        Var vh = tape.slice_cols(v, h * head_dim, head_dim);
        Var scores = tape.scale(tape.matmul_nt(qh, kh), scale);
        Var attn = tape.masked_row_softmax(scores, key_mask);
        head_outs.push_back(tape.matmul(attn, vh));
    }
    Var ctx = heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
    return linear_on_tape(tape, params, ctx, w.out);
}

Var encoder_block_on_tape(Tape& tape, ParamBinder& params, Var x, const EncoderLayerWeights& w,
                          int heads, const std::vector<uint8_t>& mask) {
    Var attn = multi_head_attention_on_tape(tape, params, x, x, w.attn, heads, mask);
    x = tape.layer_norm_rows(tape.add(x, attn), params.bind(w.ln1.gamma),
                             params.bind(w.ln1.beta));
    Var f = linear_on_tape(tape, params, tape.gelu(linear_on_tape(tape, params, x, w.ffn1)),
                           w.ffn2);
    return tape.layer_norm_rows(tape.add(x, f), params.bind(w.ln2.gamma),
                                params.bind(w.ln2.beta));
}

Var encode_on_tape(Tape& tape, ParamBinder& params, Var input, const std::vector<uint8_t>& mask,
                   const EncoderWeights& w, const EncoderConfig& config) {
    config.validate();
    if (tape.value(input).cols() != config.input_width)
        throw std::invalid_argument("encode: tensor width != config.input_width");
    if (static_cast<Eigen::Index>(mask.size()) != tape.value(input).rows())
        throw std::invalid_argument("encode: mask length != M");

    Var x = linear_on_tape(tape, params, input, w.input_proj);
    for (const auto& layer : w.layers)
        x = encoder_block_on_tape(tape, params, x, layer, config.heads, mask);
    return x;
}

Var map_cross_attention_on_tape(Tape& tape, ParamBinder& params, Var bev_queries,
                                Var map_features, const std::vector<uint8_t>& map_mask,
                                const FusionWeights& w, int heads) {
    bool any = false;
    for (uint8_t m : map_mask) any = any || (m != 0);
    if (tape.value(map_features).rows() == 0 || !any) return bev_queries;

    Var attn = multi_head_attention_on_tape(tape, params, bev_queries, map_features, w.attn,
                                            heads, map_mask);
    return tape.add(bev_queries, attn);
}

namespace {

Mat tensor_to_mat(const enc::PolylineSequenceTensor& t) {
    Mat m(t.rows, t.cols);
    for (int r = 0; r < t.rows; ++r)
        for (int c = 0; c < t.cols; ++c) m(r, c) = static_cast<double>(t.at(r, c));
    return m;
}

}  // namespace

MapFeatures encode(const enc::PolylineSequenceTensor& tensor, const std::vector<uint8_t>& mask,
                   const EncoderWeights& weights, const EncoderConfig& config) {
    std::vector<uint8_t> m = mask.empty() ? std::vector<uint8_t>(tensor.rows, 1) : mask;
    if (static_cast<int>(m.size()) != tensor.rows)
        throw std::invalid_argument("encode: mask length != M");

    MapFeatures out;
    out.valid = m;
    if (tensor.rows == 0) {
        out.data = Mat(0, config.width);
        return out;
    }

    Tape tape;
    ParamBinder params(tape);
    Var input = tape.constant(tensor_to_mat(tensor));

    // Run layer by layer so a non-finite intermediate can name its layer.
    if (tensor.cols != config.input_width)
        throw std::invalid_argument("encode: tensor width != config.input_width");
    Var x = tape.add_row_broadcast(tape.matmul(input, params.bind(weights.input_proj.w)),
                                   params.bind(weights.input_proj.b));
    if (!tape.value(x).allFinite()) throw NumericError("encode: input projection not finite");
    for (size_t i = 0; i < weights.layers.size(); ++i) {
        x = encoder_block_on_tape(tape, params, x, weights.layers[i], config.heads, m);
        if (!tape.value(x).allFinite())
            throw NumericError("encode: layer " + std::to_string(i) + " produced non-finite values");
    }
    out.data = tape.value(x);
    return out;
}

Mat map_cross_attention(const Mat& bev_queries, const MapFeatures& map_features,
                        const FusionWeights& weights, int heads) {
    if (map_features.data.rows() > 0 && map_features.data.cols() != bev_queries.cols())
        throw std::invalid_argument("map_cross_attention: feature width mismatch");

    Tape tape;
    ParamBinder params(tape);
    Var q = tape.constant(bev_queries);
    Var f = tape.constant(map_features.data);
    Var out = map_cross_attention_on_tape(tape, params, q, f, map_features.valid, weights, heads);
    if (out.id == q.id) return bev_queries;  // identity path, bitwise
    return tape.value(out);
}

}  // namespace smerf::nn
