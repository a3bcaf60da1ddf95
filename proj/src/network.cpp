#include "ihp/network.hpp"

#include <cmath>

namespace ihp {

void ModelConfig::validate() const {
  if (num_classes < 2) fail(ErrorKind::invalid_argument, "num_classes must be >= 2");
  if (base_channels < 1 || embed_dim < 1) fail(ErrorKind::invalid_argument, "channel counts must be positive");
  if (depth < 2) fail(ErrorKind::invalid_argument, "depth must be >= 2 so a stride-4 feature exists");
  if (stem_kernel < 1 || stem_kernel % 2 == 0) fail(ErrorKind::invalid_argument, "stem_kernel must be odd");
  if (crop_size < 8) fail(ErrorKind::invalid_argument, "crop_size too small");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"num_classes", cfg.num_classes}, {"base_channels", cfg.base_channels}, {"depth", cfg.depth},
          {"stem_kernel", cfg.stem_kernel}, {"embed_dim", cfg.embed_dim},         {"crop_size", cfg.crop_size}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.depth = j.at("depth").get<int>();
  cfg.stem_kernel = j.at("stem_kernel").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.crop_size = j.value("crop_size", 64);
  cfg.validate();
  return cfg;
}

namespace {

float gaussian(Rng& rng) {
  const double u1 = 1.0 - rng.uniform01();
  const double u2 = rng.uniform01();
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.item(i), a.item(i) + a.item_size(), out.item(i));
    std::copy(b.item(i), b.item(i) + b.item_size(), out.item(i) + a.item_size());
  }
  return out;
}

// Splits the channel gradient of concat(a, b) back into its two parts.
void split_channels(const Tensor& d, int first_channels, Tensor* da, Tensor* db) {
  const std::size_t plane = d.plane();
  const std::size_t na = plane * first_channels;
  const std::size_t nb = d.item_size() - na;
  if (da) *da = Tensor(d.n, first_channels, d.h, d.w);
  if (db) *db = Tensor(d.n, d.c - first_channels, d.h, d.w);
  for (int i = 0; i < d.n; ++i) {
    if (da) std::copy(d.item(i), d.item(i) + na, da->item(i));
    if (db) std::copy(d.item(i) + na, d.item(i) + na + nb, db->item(i));
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (dst.data.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

std::size_t Network::add_conv(const std::string& name, int in, int out, kernels::ConvGeometry g, bool relu,
                              Rng& rng) {
  const int k = g.kernel;
  const int fan_in = in * k * k;
  const double scale = std::sqrt((relu ? 2.0 : 1.0) / fan_in);
  Parameter weight{name + ".weight", {out, in, k, k}, std::vector<float>(static_cast<std::size_t>(out) * fan_in)};
  for (float& v : weight.values) v = static_cast<float>(gaussian(rng) * scale);
  Parameter bias{name + ".bias", {out}, std::vector<float>(out, 0.0f)};
  ConvLayer layer{name, in, out, g, relu, params_.size(), params_.size() + 1};
  params_.push_back(std::move(weight));
  params_.push_back(std::move(bias));
  layers_.push_back(layer);
  return layers_.size() - 1;
}

Network::Network(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  std::vector<int> ch(cfg_.depth);
  for (int i = 0; i < cfg_.depth; ++i) ch[i] = cfg_.base_channels << i;

  const int k = cfg_.stem_kernel;
  stem_ = add_conv("stem", cfg_.input_channels(), ch[0], {k, 2, k / 2, 1}, true, rng);
  stages_.resize(cfg_.depth);
  for (int i = 1; i < cfg_.depth; ++i) {
    const std::string p = "enc" + std::to_string(i);
    stages_[i].push_back(add_conv(p + ".down", ch[i - 1], ch[i], {3, 2, 1, 1}, true, rng));
    if (i + 1 < cfg_.depth) {
      stages_[i].push_back(add_conv(p + ".conv", ch[i], ch[i], {3, 1, 1, 1}, true, rng));
    } else {
      stages_[i].push_back(add_conv(p + ".dil2", ch[i], ch[i], {3, 1, 2, 2}, true, rng));
      stages_[i].push_back(add_conv(p + ".dil4", ch[i], ch[i], {3, 1, 4, 4}, true, rng));
    }
  }
  decoders_.resize(cfg_.depth - 1);
  for (int i = cfg_.depth - 2; i >= 0; --i)
    decoders_[i] = add_conv("dec" + std::to_string(i), ch[i + 1] + ch[i], ch[i], {3, 1, 1, 1}, true, rng);
  embed_ = add_conv("embed", ch[1], cfg_.embed_dim, {1, 1, 0, 1}, false, rng);
  refine_ = add_conv("refine", ch[0] + cfg_.input_channels(), ch[0], {3, 1, 1, 1}, true, rng);
  head_ = add_conv("head", ch[0], cfg_.num_classes, {3, 1, 1, 1}, false, rng);
}

std::vector<std::vector<float>> Network::zero_gradients() const {
  std::vector<std::vector<float>> g;
  g.reserve(params_.size());
  for (const Parameter& p : params_) g.emplace_back(p.values.size(), 0.0f);
  return g;
}

Tensor Network::run(std::size_t layer, const Tensor& in, Activations* acts) const {
  const ConvLayer& l = layers_[layer];
  Tensor out;
  kernels::conv2d_forward(in, params_[l.weight].values, params_[l.bias].values, l.out_channels, l.geometry, out);
  if (l.relu) kernels::relu_inplace(out);
  if (acts) {
    acts->conv_in[layer] = in;
    acts->conv_out[layer] = out;
  }
  return out;
}

Tensor Network::run_back(std::size_t layer, const Activations& acts, Tensor dout, bool need_input_grad,
                         std::vector<std::vector<float>>& grads) const {
  const ConvLayer& l = layers_[layer];
  if (l.relu) kernels::relu_backward(acts.conv_out[layer], dout);
  Tensor din;
  kernels::conv2d_backward(acts.conv_in[layer], params_[l.weight].values, l.out_channels, l.geometry, dout,
                           need_input_grad ? &din : nullptr, grads[l.weight], grads[l.bias]);
  return din;
}

Network::Output Network::forward(const Tensor& input) const { return forward_impl(input, nullptr); }

Network::Output Network::forward(const Tensor& input, Activations& acts) const {
  acts.input = input;
  acts.conv_in.assign(layers_.size(), Tensor{});
  acts.conv_out.assign(layers_.size(), Tensor{});
  return forward_impl(input, &acts);
}

Network::Output Network::forward_impl(const Tensor& input, Activations* acts) const {
  if (input.c != cfg_.input_channels()) fail(ErrorKind::invalid_argument, "input channel count does not match model");
  const int depth = cfg_.depth;
  std::vector<Tensor> enc(depth);
  enc[0] = run(stem_, input, acts);
  for (int i = 1; i < depth; ++i) {
    Tensor x = enc[i - 1];
    for (std::size_t l : stages_[i]) x = run(l, x, acts);
    enc[i] = std::move(x);
  }
  std::vector<Tensor> dec(depth - 1);
  const Tensor* x = &enc[depth - 1];
  for (int i = depth - 2; i >= 0; --i) {
    Tensor up;
    kernels::resize_bilinear(*x, enc[i].h, enc[i].w, up);
    dec[i] = run(decoders_[i], concat_channels(up, enc[i]), acts);
    x = &dec[i];
  }
  Output out;
  out.features = run(embed_, depth >= 3 ? dec[1] : enc[1], acts);
  Tensor up;
  kernels::resize_bilinear(dec[0], input.h, input.w, up);
  out.logits = run(head_, run(refine_, concat_channels(up, input), acts), acts);
  return out;
}

void Network::backward(const Activations& acts, const Tensor& dlogits, const Tensor& dfeatures,
                       std::vector<std::vector<float>>& grads) const {
  const int depth = cfg_.depth;
  std::vector<Tensor> d_enc(depth), d_dec(depth - 1);

  {
    Tensor dcat = run_back(refine_, acts, run_back(head_, acts, dlogits, true, grads), true, grads);
    Tensor dup;
    split_channels(dcat, layers_[decoders_[0]].out_channels, &dup, nullptr);
    const Tensor& d0 = acts.conv_out[decoders_[0]];
    kernels::resize_bilinear_backward(dup, d0.h, d0.w, d_dec[0]);
  }
  const bool tap_on_decoder = depth >= 3;
  for (int i = 0; i <= depth - 2; ++i) {
    if (tap_on_decoder && i == 1 && !dfeatures.data.empty())
      accumulate(d_dec[1], run_back(embed_, acts, dfeatures, true, grads));
    const std::size_t layer = decoders_[i];
    const Tensor& below = i == depth - 2 ? acts.conv_out[stages_[depth - 1].back()] : acts.conv_out[decoders_[i + 1]];
    Tensor dcat = run_back(layer, acts, d_dec[i], true, grads);
    Tensor dup, dskip;
    split_channels(dcat, below.c, &dup, &dskip);
    accumulate(d_enc[i], dskip);
    Tensor dbelow;
    kernels::resize_bilinear_backward(dup, below.h, below.w, dbelow);
    accumulate(i == depth - 2 ? d_enc[depth - 1] : d_dec[i + 1], dbelow);
  }
  if (!tap_on_decoder && !dfeatures.data.empty()) accumulate(d_enc[1], run_back(embed_, acts, dfeatures, true, grads));
  for (int i = depth - 1; i >= 1; --i) {
    Tensor d = d_enc[i];
    for (auto it = stages_[i].rbegin(); it != stages_[i].rend(); ++it) d = run_back(*it, acts, std::move(d), true, grads);
    accumulate(d_enc[i - 1], d);
  }
  run_back(stem_, acts, d_enc[0], false, grads);
}

}  // namespace ihp
