#pragma once

#include <string>
#include <utility>

#include "smerf/smrf_io.hpp"
#include "smerf/toy.hpp"
#include "smerf/transformer.hpp"

namespace smerf::io {

// Map-encoder weights in the checkpoint container; the encoder configuration
// rides in the manifest. Loading validates tensor names and shapes.
void save_encoder_checkpoint(const std::string& path, const nn::EncoderConfig& config,
                             const nn::EncoderWeights& weights);
std::pair<nn::EncoderConfig, nn::EncoderWeights> load_encoder_checkpoint(
    const std::string& path);

void save_toy_checkpoint(const std::string& path, const toy::ToyModel& model);
toy::ToyModel load_toy_checkpoint(const std::string& path);

}  // namespace smerf::io
