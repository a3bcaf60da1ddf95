#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ihp/clickmap.hpp"
#include "ihp/losses.hpp"
#include "ihp/network.hpp"
#include "ihp/simulate.hpp"
#include "ihp/synthdata.hpp"

namespace ihp {

struct TrainConfig {
  int iterations = 1000;
  int batch_size = 8;
  double learning_rate = 7e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;
  bool augment = true;
  double scale_min = 0.5;
  double scale_max = 1.5;
  bool flip = true;
  // Probability of removing every background click from a simulated set, so
  // the network also sees inputs like evaluation's part-only initialisation.
  double background_dropout = 0.5;
  SPLossConfig sp;  // sp.lambda weighs the semantic-perceiving term
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimulationConfig& cfg);
SimulationConfig simulation_config_from_json(const nlohmann::json& j);

struct LossRecord {
  double total = 0.0;
  double ce = 0.0;
  double sp = 0.0;
};

/// A trained network together with everything needed to reproduce it.
struct Checkpoint {
  Network network;
  TrainConfig train;
  SimulationConfig simulation;
  int iterations = 0;
  std::vector<std::string> class_names;
  std::vector<LossRecord> history;
};

/// Archive layout: "IHPCKPT1", u64 LE header length, JSON header (configs,
/// class names, loss history, tensor table of name/shape/offset/count), then
/// the tensors as contiguous little-endian float32.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Training example after augmentation; exposed for tests and inspection.
Sample augment_sample(const Sample& sample, const TrainConfig& cfg, const DatasetMeta& meta, int crop_size, Rng& rng);

using TrainObserver = std::function<void(int iteration, const LossRecord& loss)>;

/// SGD with momentum, weight decay and polynomial learning-rate decay over
/// batches whose clicks are simulated per `sim`. Throws "training diverged"
/// on a non-finite loss.
Checkpoint train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const SimulationConfig& sim,
                 const Dataset& dataset, const TrainObserver& observer = {});

Tensor batch_inputs(std::span<const NetworkInput> inputs);
Network::Output run_network(const Network& net, const RgbImage& image, const ClickSet& clicks);

/// Per-pixel argmax of the logits (ties to the smaller class id).
LabelMask argmax_labels(const Tensor& logits, int item = 0);
LabelMask predict(const Network& net, const RgbImage& image, const ClickSet& clicks);

}  // namespace ihp
