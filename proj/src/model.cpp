#include "ihp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ihp {

void TrainConfig::validate() const {
  if (iterations < 0) fail(ErrorKind::invalid_argument, "iterations must be non-negative");
  if (batch_size < 1) fail(ErrorKind::invalid_argument, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail(ErrorKind::invalid_argument, "learning rate must be positive");
  if (!(scale_min > 0.0) || scale_min > scale_max) fail(ErrorKind::invalid_argument, "invalid scale range");
  if (!(background_dropout >= 0.0 && background_dropout <= 1.0))
    fail(ErrorKind::invalid_argument, "background_dropout must be in [0, 1]");
  sp.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"poly_power", c.poly_power},
          {"augment", c.augment},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"flip", c.flip},
          {"background_dropout", c.background_dropout},
          {"seed", c.seed},
          {"sp",
           {{"margin", c.sp.margin},
            {"lambda", c.sp.lambda},
            {"triplets_per_pair", c.sp.triplets_per_pair},
            {"eps", c.sp.eps},
            {"literal_min_form", c.sp.literal_min_form}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.poly_power = j.at("poly_power").get<double>();
  c.augment = j.at("augment").get<bool>();
  c.scale_min = j.at("scale_min").get<double>();
  c.scale_max = j.at("scale_max").get<double>();
  c.flip = j.at("flip").get<bool>();
  c.background_dropout = j.value("background_dropout", 0.0);
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& sp = j.at("sp");
  c.sp.margin = sp.at("margin").get<double>();
  c.sp.lambda = sp.at("lambda").get<double>();
  c.sp.triplets_per_pair = sp.at("triplets_per_pair").get<int>();
  c.sp.eps = sp.at("eps").get<double>();
  c.sp.literal_min_form = sp.value("literal_min_form", false);
  return c;
}

nlohmann::json to_json(const SimulationConfig& c) {
  return {{"strategy", std::string(to_string(c.strategy))},
          {"candidates", c.candidates},
          {"d_margin", c.d_margin},
          {"ec_num_max", c.ec_num_max},
          {"bg_extra_min", c.bg_extra_min},
          {"bg_extra_max", c.bg_extra_max},
          {"seed", c.seed}};
}

SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
  SimulationConfig c;
  c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  c.candidates = j.at("candidates").get<int>();
  c.d_margin = j.at("d_margin").get<double>();
  c.ec_num_max = j.at("ec_num_max").get<int>();
  c.bg_extra_min = j.at("bg_extra_min").get<int>();
  c.bg_extra_max = j.at("bg_extra_max").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// ---------------------------------------------------------------------------
// Checkpoint archive

namespace {

constexpr char kMagic[8] = {'I', 'H', 'P', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const Parameter& p : ckpt.network.parameters()) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"count", p.values.size()}});
    offset += p.values.size();
  }
  nlohmann::json history = nlohmann::json::array();
  for (const LossRecord& r : ckpt.history) history.push_back({r.total, r.ce, r.sp});
  const nlohmann::json header = {{"format", "ihp-checkpoint"},
                                 {"version", 1},
                                 {"model", to_json(ckpt.network.config())},
                                 {"train", to_json(ckpt.train)},
                                 {"simulation", to_json(ckpt.simulation)},
                                 {"iterations", ckpt.iterations},
                                 {"seeds", {{"train", ckpt.train.seed}, {"simulation", ckpt.simulation.seed}}},
                                 {"class_names", ckpt.class_names},
                                 {"loss_history", history},
                                 {"dtype", "float32-le"},
                                 {"tensors", tensors}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset * 4);
  for (const Parameter& p : ckpt.network.parameters())
    for (float v : p.values) put_f32(out, v);
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || !std::equal(kMagic, kMagic + 8, bytes.begin()))
    fail(ErrorKind::corrupt_data, "not a checkpoint archive");
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) fail(ErrorKind::corrupt_data, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    const ModelConfig model_cfg = model_config_from_json(header.at("model"));
    Checkpoint ckpt{Network(model_cfg, 0), train_config_from_json(header.at("train")),
                    simulation_config_from_json(header.at("simulation")), header.at("iterations").get<int>(),
                    header.at("class_names").get<std::vector<std::string>>(), {}};
    for (const auto& h : header.at("loss_history"))
      ckpt.history.push_back({h.at(0).get<double>(), h.at(1).get<double>(), h.at(2).get<double>()});
    const std::size_t data_start = 16 + header_len;
    const auto& table = header.at("tensors");
    auto& params = ckpt.network.parameters();
    if (table.size() != params.size()) fail(ErrorKind::corrupt_data, "checkpoint tensor table does not match model");
    std::size_t floats = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = table[i];
      if (t.at("name").get<std::string>() != params[i].name || t.at("shape").get<std::vector<int>>() != params[i].shape)
        fail(ErrorKind::corrupt_data, "checkpoint tensor " + t.at("name").get<std::string>() + " does not match model");
      const std::size_t off = t.at("offset").get<std::size_t>();
      const std::size_t count = t.at("count").get<std::size_t>();
      if (count != params[i].values.size() || data_start + (off + count) * 4 > bytes.size())
        fail(ErrorKind::corrupt_data, "truncated checkpoint tensor data");
      for (std::size_t k = 0; k < count; ++k) params[i].values[k] = get_f32(bytes, data_start + (off + k) * 4);
      floats += count;
    }
    if (data_start + floats * 4 != bytes.size()) fail(ErrorKind::corrupt_data, "trailing bytes after checkpoint tensors");
    if (static_cast<int>(ckpt.class_names.size()) != model_cfg.num_classes)
      fail(ErrorKind::corrupt_data, "checkpoint class names do not match num_classes");
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_data, std::string("malformed checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------
// Augmentation

namespace {

RgbImage resize_image(const RgbImage& in, int out_h, int out_w) {
  RgbImage out(out_h, out_w);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double ly = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double lx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (1 - ly) * ((1 - lx) * in.at(y0, x0)[ch] + lx * in.at(y0, x1)[ch]) +
                         ly * ((1 - lx) * in.at(y1, x0)[ch] + lx * in.at(y1, x1)[ch]);
        out.at(y, x)[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

LabelMask resize_mask(const LabelMask& in, int out_h, int out_w) {
  LabelMask out(out_h, out_w, in.num_classes());
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(static_cast<int>((static_cast<long>(y) * 2 + 1) * in.height() / (2L * out_h)), in.height() - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(static_cast<int>((static_cast<long>(x) * 2 + 1) * in.width() / (2L * out_w)), in.width() - 1);
      out.set(y, x, in.at(sy, sx));
    }
  }
  return out;
}

// Places a src_size window of the source at `offset` (negative = pad).
Sample crop_or_pad(const Sample& s, int target, int off_y, int off_x) {
  Sample out;
  out.id = s.id;
  out.image = RgbImage(target, target);
  out.mask = LabelMask(target, target, s.mask.num_classes());
  for (int y = 0; y < target; ++y) {
    const int sy = y + off_y;
    if (sy < 0 || sy >= s.mask.height()) continue;
    for (int x = 0; x < target; ++x) {
      const int sx = x + off_x;
      if (sx < 0 || sx >= s.mask.width()) continue;
      std::copy(s.image.at(sy, sx), s.image.at(sy, sx) + 3, out.image.at(y, x));
      out.mask.set(y, x, s.mask.at(sy, sx));
    }
  }
  return out;
}

int random_offset(int size, int target, Rng& rng) {
  if (size >= target) return rng.uniform_int(0, size - target);
  return -rng.uniform_int(0, target - size);
}

}  // namespace

Sample augment_sample(const Sample& sample, const TrainConfig& cfg, const DatasetMeta& meta, int crop_size, Rng& rng) {
  const int h = sample.mask.height();
  const int w = sample.mask.width();
  if (!cfg.augment) {
    if (h == crop_size && w == crop_size) return sample;
    return crop_or_pad(sample, crop_size, (h - crop_size) / 2, (w - crop_size) / 2);
  }
  const double scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * rng.uniform01();
  const int sh = std::max(1, static_cast<int>(std::lround(h * scale)));
  const int sw = std::max(1, static_cast<int>(std::lround(w * scale)));
  Sample scaled{resize_image(sample.image, sh, sw), resize_mask(sample.mask, sh, sw), sample.id};
  const int oy = random_offset(sh, crop_size, rng);
  const int ox = random_offset(sw, crop_size, rng);
  Sample out = crop_or_pad(scaled, crop_size, oy, ox);
  if (cfg.flip && meta.flips_enabled && rng.bernoulli(0.5)) {
    std::vector<std::uint8_t> swap(out.mask.num_classes());
    for (std::size_t k = 0; k < swap.size(); ++k) swap[k] = static_cast<std::uint8_t>(k);
    for (auto [a, b] : meta.flip_pairs) {
      if (a < static_cast<int>(swap.size()) && b < static_cast<int>(swap.size())) {
        swap[a] = static_cast<std::uint8_t>(b);
        swap[b] = static_cast<std::uint8_t>(a);
      }
    }
    Sample flipped = out;
    for (int y = 0; y < crop_size; ++y)
      for (int x = 0; x < crop_size; ++x) {
        const int fx = crop_size - 1 - x;
        std::copy(out.image.at(y, fx), out.image.at(y, fx) + 3, flipped.image.at(y, x));
        flipped.mask.set(y, x, swap[out.mask.at(y, fx)]);
      }
    out = std::move(flipped);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference helpers

Tensor batch_inputs(std::span<const NetworkInput> inputs) {
  if (inputs.empty()) fail(ErrorKind::invalid_argument, "empty batch");
  Tensor t(static_cast<int>(inputs.size()), inputs[0].channels, inputs[0].height, inputs[0].width);
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    if (inputs[b].channels != t.c || inputs[b].height != t.h || inputs[b].width != t.w)
      fail(ErrorKind::invalid_argument, "batch items differ in shape");
    std::copy(inputs[b].values.begin(), inputs[b].values.end(), t.item(static_cast<int>(b)));
  }
  return t;
}

Network::Output run_network(const Network& net, const RgbImage& image, const ClickSet& clicks) {
  const NetworkInput in =
      assemble_input(image, encode_clicks(clicks, image.height, image.width, net.config().num_classes));
  return net.forward(batch_inputs(std::span(&in, 1)));
}

LabelMask argmax_labels(const Tensor& logits, int item) {
  const std::size_t plane = logits.plane();
  const float* base = logits.item(item);
  std::vector<std::uint8_t> labels(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    for (int c = 1; c < logits.c; ++c)
      if (base[c * plane + i] > base[best * plane + i]) best = c;
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return LabelMask(logits.h, logits.w, logits.c, std::move(labels));
}

LabelMask predict(const Network& net, const RgbImage& image, const ClickSet& clicks) {
  return argmax_labels(run_network(net, image, clicks).logits);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Prepared {
  Sample sample;
  ClickSet clicks;  // simulated set, drives the loss weighting
  NetworkInput input;
  Rng rng{0};
};

}  // namespace

Checkpoint train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const SimulationConfig& sim,
                 const Dataset& dataset, const TrainObserver& observer) {
  model_cfg.validate();
  train_cfg.validate();
  sim.validate();
  if (dataset.samples.empty()) fail(ErrorKind::invalid_argument, "empty training set");
  if (dataset.meta.num_classes() != model_cfg.num_classes)
    fail(ErrorKind::invalid_argument, "dataset class count does not match model");

  const Rng root(train_cfg.seed);
  Checkpoint ckpt{Network(model_cfg, root.fork(1).next_u64()), train_cfg, sim, 0, dataset.meta.class_names, {}};
  Network& net = ckpt.network;
  auto& params = net.parameters();
  std::vector<std::vector<float>> velocity = net.zero_gradients();
  Rng batch_rng = root.fork(2);
  const Rng item_root = root.fork(3 ^ Rng::mix(sim.seed + 0x51));
  const int batch = train_cfg.batch_size;
  const double lambda = train_cfg.sp.lambda;

  std::vector<Prepared> items(batch);
  std::vector<std::size_t> picks(batch);
  for (int it = 0; it < train_cfg.iterations; ++it) {
    for (int b = 0; b < batch; ++b) picks[b] = batch_rng.index(dataset.samples.size());

#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < batch; ++b) {
      Prepared& p = items[b];
      p.rng = item_root.fork(static_cast<std::uint64_t>(it) * 4096 + b);
      p.sample = augment_sample(dataset.samples[picks[b]], train_cfg, dataset.meta, model_cfg.crop_size, p.rng);
      p.clicks = simulate(p.sample.mask, sim, p.rng);
      ClickSet shown = p.clicks;
      if (train_cfg.background_dropout > 0.0 && p.rng.bernoulli(train_cfg.background_dropout)) shown.remove_class(0);
      p.input = assemble_input(p.sample.image,
                               encode_clicks(shown, p.sample.mask.height(), p.sample.mask.width(), model_cfg.num_classes));
    }
    std::vector<NetworkInput> inputs;
    inputs.reserve(batch);
    for (const Prepared& p : items) inputs.push_back(p.input);

    Network::Activations acts;
    const Network::Output out = net.forward(batch_inputs(inputs), acts);
    Tensor dlogits(out.logits.n, out.logits.c, out.logits.h, out.logits.w);
    Tensor dfeatures;
    if (lambda > 0.0) dfeatures = Tensor(out.features.n, out.features.c, out.features.h, out.features.w);

    std::vector<double> ce(batch, 0.0), sp(batch, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < batch; ++b) {
      Prepared& p = items[b];
      Logits logits{out.logits.c, out.logits.h, out.logits.w,
                    std::vector<double>(out.logits.item(b), out.logits.item(b) + out.logits.item_size())};
      const LossWithGrad ce_b = balanced_ce_with_grad(logits, p.sample.mask, class_weights(p.sample.mask, p.clicks));
      ce[b] = ce_b.value;
      float* dl = dlogits.item(b);
      for (std::size_t i = 0; i < ce_b.grad.size(); ++i) dl[i] = static_cast<float>(ce_b.grad[i] / batch);
      if (lambda > 0.0) {
        FeatureMap f(out.features.c, out.features.h, out.features.w);
        std::copy(out.features.item(b), out.features.item(b) + out.features.item_size(), f.values.begin());
        const LossWithGrad sp_b = sp_loss_with_grad(f, downsample_majority(p.sample.mask), p.clicks,
                                                    part_adjacency(p.sample.mask), train_cfg.sp, p.rng);
        sp[b] = sp_b.value;
        float* df = dfeatures.item(b);
        for (std::size_t i = 0; i < sp_b.grad.size(); ++i) df[i] = static_cast<float>(lambda * sp_b.grad[i] / batch);
      }
    }
    LossRecord rec;
    for (int b = 0; b < batch; ++b) {
      rec.ce += ce[b] / batch;
      rec.sp += sp[b] / batch;
    }
    rec.total = total_loss(rec.ce, rec.sp, lambda);
    if (!std::isfinite(rec.total)) fail(ErrorKind::runtime, "training diverged");

    std::vector<std::vector<float>> grads = net.zero_gradients();
    net.backward(acts, dlogits, dfeatures, grads);

    const double progress = static_cast<double>(it) / std::max(1, train_cfg.iterations);
    const double lr = train_cfg.learning_rate * std::pow(1.0 - progress, train_cfg.poly_power);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const bool decay = params[k].shape.size() > 1;  // weights only, not biases
      auto& w = params[k].values;
      auto& v = velocity[k];
      const auto& g = grads[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + (decay ? train_cfg.weight_decay * w[i] : 0.0);
        v[i] = static_cast<float>(train_cfg.momentum * v[i] + gi);
        w[i] = static_cast<float>(w[i] - lr * v[i]);
      }
    }
    for (const auto& g : grads)
      for (float x : g)
        if (!std::isfinite(x)) fail(ErrorKind::runtime, "training diverged");

    ckpt.history.push_back(rec);
    ckpt.iterations = it + 1;
    if (observer) observer(it, rec);
  }
  return ckpt;
}

}  // namespace ihp
