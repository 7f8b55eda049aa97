#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nbr/attributes.hpp"
#include "nbr/image.hpp"
#include "nbr/network.hpp"

namespace nbr {

struct ModelConfig {
  int layers = 20;
  int features = 64;
  int kernel = 3;
  int image_channels = 1;
  int attribute_channels = kAttributeChannels;

  NetworkShape shape() const {
    return {layers, features, kernel, image_channels, attribute_channels};
  }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Where the weights came from.
struct Provenance {
  std::string init = "gaussian-fan-in";  // attribute filters of layer 1 scaled by 0.1
  std::uint64_t seed = 0;
  std::string stage = "init";  // init | stage1 | stage2
  int epochs_completed = 0;
  std::string manifest_hash;
  std::string notes;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// Adam moments for resumable training, one entry per layer.
struct OptimizerState {
  struct Layer {
    std::uint64_t step = 0;
    std::vector<float> m_w, v_w, m_b, v_b;
    friend bool operator==(const Layer&, const Layer&) = default;
  };
  std::vector<Layer> layers;
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct ModelCheckpoint {
  ModelConfig config;
  Network<float> network;
  std::string channel_order = channel_order_tag();
  Provenance provenance;
  std::optional<OptimizerState> optimizer;

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

ModelCheckpoint build_model(const ModelConfig& config, std::uint64_t seed);

// Number of trainable parameters implied by a configuration.
std::size_t parameter_count(const ModelConfig& config);

struct ForwardResult {
  Image restored;               // clip(input + residual, 0, 1)
  std::vector<float> residual;  // unclipped, image_channels x H x W
};

// Concatenates the image and attribute planes, runs the network and adds the
// predicted residual back onto the input.
ForwardResult forward(const ModelCheckpoint& ckpt, const Image& img, const AttributeMap& attrs);

// Planar network input: image planes followed by attribute planes.
std::vector<float> assemble_input(const Image& img, const AttributeMap& attrs);

struct LoadOptions {
  // With strict set, a channel-order tag that differs from the runtime order
  // is an error; otherwise a permutation of it is remapped with a warning.
  bool strict = false;
};

std::vector<unsigned char> serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(std::span<const unsigned char> data,
                                       const LoadOptions& opt = {});
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path, const LoadOptions& opt = {});

// Short stable identifier (CRC of the serialized weights).
std::string checkpoint_id(const ModelCheckpoint& ckpt);

}  // namespace nbr
