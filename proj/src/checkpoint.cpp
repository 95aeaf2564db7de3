#include "smerf/checkpoint.hpp"

#include <functional>
#include <set>

#include "smerf/errors.hpp"

namespace smerf::io {

namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* key,
                              const std::string& origin) {
    auto it = j.find(key);
    if (it == j.end()) throw StructuralError(origin + ": missing config field " + key);
    return *it;
}

void check_format(const nlohmann::json& config, const char* expected,
                  const std::string& origin) {
    if (!config.is_object() || config.value("format", "") != expected)
        throw StructuralError(origin + ": not a " + expected + " checkpoint");
}

using VisitAll = std::function<void(const nn::ParamVisitor&)>;

void collect_tensors(Checkpoint& ck, const VisitAll& visit_all) {
    visit_all([&](const std::string& name, nn::Mat& m) {
        ck.tensors.emplace_back(name, from_matrix(m));
    });
}

void apply_tensors(const Checkpoint& ck, const VisitAll& visit_all,
                   const std::string& origin) {
    std::set<std::string> used;
    visit_all([&](const std::string& name, nn::Mat& m) {
        nn::Mat loaded = to_matrix(ck.at(name));
        if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
            throw StructuralError(origin + ": tensor " + name + " has shape " +
                                  std::to_string(loaded.rows()) + "x" +
                                  std::to_string(loaded.cols()) + ", expected " +
                                  std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        m = std::move(loaded);
        used.insert(name);
    });
    for (const auto& [name, _] : ck.tensors)
        if (!used.count(name))
            throw StructuralError(origin + ": unexpected tensor " + name);
}

nlohmann::json encoder_config_to_json(const nn::EncoderConfig& c) {
    return {{"format", "smerf-encoder"}, {"layers", c.layers},
            {"width", c.width},          {"heads", c.heads},
            {"ffn_width", c.ffn_width},  {"input_width", c.input_width}};
}

nn::EncoderConfig encoder_config_from_json(const nlohmann::json& j,
                                           const std::string& origin) {
    check_format(j, "smerf-encoder", origin);
    nn::EncoderConfig c;
    c.layers = require(j, "layers", origin).get<int>();
    c.width = require(j, "width", origin).get<int>();
    c.heads = require(j, "heads", origin).get<int>();
    c.ffn_width = require(j, "ffn_width", origin).get<int>();
    c.input_width = require(j, "input_width", origin).get<int>();
    c.validate();
    return c;
}

nlohmann::json toy_config_to_json(const toy::ToyModelConfig& c) {
    return {{"format", "smerf-toy"},
            {"grid_rows", c.grid_rows},
            {"grid_cols", c.grid_cols},
            {"width", c.width},
            {"heads", c.heads},
            {"refine_layers", c.refine_layers},
            {"lane_queries", c.lane_queries},
            {"use_sd_map", c.use_sd_map},
            {"seed", c.seed},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"sd_encoder_layers", c.sd_encoder_layers},
            {"encoding",
             {{"points_per_polyline", c.encoding.points_per_polyline},
              {"embed_dim", c.encoding.embed_dim},
              {"temperature", c.encoding.temperature},
              {"road_type_dim", c.encoding.road_type_dim}}},
            {"bev_range",
             {{"forward", c.bev_range.forward},
              {"backward", c.bev_range.backward},
              {"left", c.bev_range.left},
              {"right", c.bev_range.right}}}};
}

toy::ToyModelConfig toy_config_from_json(const nlohmann::json& j, const std::string& origin) {
    check_format(j, "smerf-toy", origin);
    toy::ToyModelConfig c;
    c.grid_rows = require(j, "grid_rows", origin).get<int>();
    c.grid_cols = require(j, "grid_cols", origin).get<int>();
    c.width = require(j, "width", origin).get<int>();
    c.heads = require(j, "heads", origin).get<int>();
    c.refine_layers = require(j, "refine_layers", origin).get<int>();
    c.lane_queries = require(j, "lane_queries", origin).get<int>();
    c.use_sd_map = require(j, "use_sd_map", origin).get<bool>();
    c.seed = require(j, "seed", origin).get<uint64_t>();
    c.epochs = require(j, "epochs", origin).get<int>();
    c.learning_rate = require(j, "learning_rate", origin).get<double>();
    c.sd_encoder_layers = require(j, "sd_encoder_layers", origin).get<int>();
    const auto& e = require(j, "encoding", origin);
    c.encoding.points_per_polyline = require(e, "points_per_polyline", origin).get<int>();
    c.encoding.embed_dim = require(e, "embed_dim", origin).get<int>();
    c.encoding.temperature = require(e, "temperature", origin).get<double>();
    c.encoding.road_type_dim = require(e, "road_type_dim", origin).get<int>();
    const auto& b = require(j, "bev_range", origin);
    c.bev_range.forward = require(b, "forward", origin).get<double>();
    c.bev_range.backward = require(b, "backward", origin).get<double>();
    c.bev_range.left = require(b, "left", origin).get<double>();
    c.bev_range.right = require(b, "right", origin).get<double>();
    c.encoding.bev_range = c.bev_range;
    c.validate();
    return c;
}

}  // namespace

void save_encoder_checkpoint(const std::string& path, const nn::EncoderConfig& config,
                             const nn::EncoderWeights& weights) {
    Checkpoint ck;
    ck.config = encoder_config_to_json(config);
    auto& mutable_weights = const_cast<nn::EncoderWeights&>(weights);
    collect_tensors(ck, [&](const nn::ParamVisitor& f) {
        nn::visit_params(mutable_weights, "", f);
    });
    save_checkpoint(path, ck);
}

std::pair<nn::EncoderConfig, nn::EncoderWeights> load_encoder_checkpoint(
    const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    nn::EncoderConfig config = encoder_config_from_json(ck.config, path);
    nn::EncoderWeights weights = nn::init_weights(config, 0);
    apply_tensors(ck, [&](const nn::ParamVisitor& f) { nn::visit_params(weights, "", f); },
                  path);
    return {config, std::move(weights)};
}

void save_toy_checkpoint(const std::string& path, const toy::ToyModel& model) {
    Checkpoint ck;
    ck.config = toy_config_to_json(model.config);
    auto& mutable_model = const_cast<toy::ToyModel&>(model);
    collect_tensors(ck, [&](const nn::ParamVisitor& f) { toy::visit_params(mutable_model, f); });
    save_checkpoint(path, ck);
}

toy::ToyModel load_toy_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    toy::ToyModelConfig config = toy_config_from_json(ck.config, path);
    toy::ToyModel model = toy::init_toy_model(config);
    apply_tensors(ck, [&](const nn::ParamVisitor& f) { toy::visit_params(model, f); }, path);
    return model;
}

}  // namespace smerf::io
