#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ihp/geometry.hpp"
#include "ihp/image.hpp"
#include "json.hpp"

namespace ihp {

struct DatasetSpec {
  int num_parts = 6;  // head, torso, left-arm, right-arm, left-leg, right-leg
  int image_size = 64;
  int samples = 100;
  std::uint64_t seed = 1;
  double ambiguity = 0.8;  // P(mirrored parts share one colour)
  double occlusion = 0.3;  // P(an arm is drawn across the torso)
  std::vector<std::pair<int, int>> flip_pairs{{3, 4}, {5, 6}};

  void validate() const;
  std::vector<std::string> class_names() const;
};

struct Sample {
  RgbImage image;
  LabelMask mask;
  std::string id;
};

/// Class catalogue shared by a dataset directory, checkpoints and the service.
struct DatasetMeta {
  std::vector<std::string> class_names;  // index = class id, 0 = background
  std::vector<std::pair<int, int>> flip_pairs;
  bool flips_enabled = true;  // false when the catalogue does not declare flip pairs
  std::vector<std::string> ids;
  nlohmann::json generator;  // generation parameters when synthetic

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> samples;
};

/// RGB colour used to render a class in overlays and legends.
std::array<std::uint8_t, 3> class_color(int class_id);

std::string sample_id(int index);

/// Deterministic in (spec.seed, index): head disk, torso rectangle and
/// two-segment capsule limbs rasterised with integer arithmetic only.
Sample generate_sample(const DatasetSpec& spec, int index);
Dataset generate_dataset(const DatasetSpec& spec);
DatasetMeta make_meta(const DatasetSpec& spec);

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

DatasetMeta load_meta(const std::filesystem::path& dir);
Sample load_sample(const std::filesystem::path& dir, const std::string& id, const DatasetMeta& meta);
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const DatasetMeta& meta);
DatasetMeta meta_from_json(const nlohmann::json& j);

/// Even indices train, odd indices validate.
std::vector<Sample> split_train(const std::vector<Sample>& samples);
std::vector<Sample> split_val(const std::vector<Sample>& samples);

}  // namespace ihp
