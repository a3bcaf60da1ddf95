#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ihp/common.hpp"
#include "ihp/kernels.hpp"
#include "ihp/tensor.hpp"
#include "json.hpp"

namespace ihp {

struct ModelConfig {
  int num_classes = 7;  // parts + background
  int base_channels = 32;
  int depth = 3;  // encoder stages, stride 2 each
  int stem_kernel = 7;
  int embed_dim = 32;
  int crop_size = 64;

  int input_channels() const { return 3 + num_classes; }
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

/// Small fully-convolutional encoder-decoder.
///
/// Encoder: a k×k stride-2 stem over the RGB + click-map input, then stages
/// of (stride-2 conv, conv); the last stage uses dilations 2 and 4.
/// Decoder: bilinear upsampling with skip concatenation back to stride 2,
/// then a full-resolution head that also sees the raw input. A linear 1×1
/// projection of the stride-4 decoder feature is the embedding tap.
class Network {
 public:
  struct ConvLayer {
    std::string name;
    int in_channels = 0;
    int out_channels = 0;
    kernels::ConvGeometry geometry;
    bool relu = true;
    std::size_t weight = 0;  // parameter indices
    std::size_t bias = 0;
  };

  /// Tensors kept from forward() for backward().
  struct Activations {
    Tensor input;
    std::vector<Tensor> conv_in;
    std::vector<Tensor> conv_out;
  };

  struct Output {
    Tensor logits;    // N × num_classes × H × W
    Tensor features;  // N × embed_dim × ceil(H/4) × ceil(W/4)
  };

  Network(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  Output forward(const Tensor& input) const;
  Output forward(const Tensor& input, Activations& acts) const;

  /// grads must hold one buffer per parameter (same sizes); gradients are added.
  void backward(const Activations& acts, const Tensor& dlogits, const Tensor& dfeatures,
                std::vector<std::vector<float>>& grads) const;

  std::vector<std::vector<float>> zero_gradients() const;

 private:
  std::size_t add_conv(const std::string& name, int in, int out, kernels::ConvGeometry g, bool relu, Rng& rng);
  Tensor run(std::size_t layer, const Tensor& in, Activations* acts) const;
  Tensor run_back(std::size_t layer, const Activations& acts, Tensor dout, bool need_input_grad,
                  std::vector<std::vector<float>>& grads) const;
  Output forward_impl(const Tensor& input, Activations* acts) const;

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::vector<ConvLayer> layers_;
  std::size_t stem_ = 0;
  std::vector<std::vector<std::size_t>> stages_;  // stage i >= 1: conv layers in order
  std::vector<std::size_t> decoders_;             // decoders_[i] produces decoder level i
  std::size_t embed_ = 0;
  std::size_t refine_ = 0;
  std::size_t head_ = 0;
};

}  // namespace ihp
