#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ihp/synthdata.hpp"

using namespace ihp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ihp_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

std::array<double, 3> mean_color(const Sample& s, int cls, std::size_t* count = nullptr) {
  std::array<double, 3> sum{};
  std::size_t n = 0;
  for (int r = 0; r < s.mask.height(); ++r)
    for (int c = 0; c < s.mask.width(); ++c)
      if (s.mask.at(r, c) == cls) {
        for (int ch = 0; ch < 3; ++ch) sum[ch] += s.image.at(r, c)[ch];
        ++n;
      }
  for (double& v : sum) v /= static_cast<double>(n);
  if (count) *count = n;
  return sum;
}

double dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

TEST(Synthdata, DeterministicPerSeedAndIndex) {
  DatasetSpec spec;
  spec.samples = 5;
  const Sample a = generate_sample(spec, 3), b = generate_sample(spec, 3);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(encode_rgb_png(a.image), encode_rgb_png(b.image));
  EXPECT_FALSE(generate_sample(spec, 2).image == a.image);
  DatasetSpec other = spec;
  other.seed = 2;
  EXPECT_FALSE(generate_sample(other, 3).image == a.image);
}

TEST(Synthdata, EveryClassAndBackgroundPresent) {
  DatasetSpec spec;
  spec.samples = 60;
  const Dataset ds = generate_dataset(spec);
  ASSERT_EQ(ds.samples.size(), 60u);
  for (const Sample& s : ds.samples) {
    EXPECT_EQ(s.mask.height(), 64);
    EXPECT_EQ(s.image.height, 64);
    EXPECT_EQ(s.mask.num_classes(), 7);
    for (int c = 0; c < 7; ++c) EXPECT_GE(connected_components(s.mask, c).size(), 1u) << s.id << " class " << c;
  }
}

TEST(Synthdata, FewerPartsAndLargerCanvas) {
  DatasetSpec spec;
  spec.num_parts = 3;
  spec.image_size = 96;
  spec.samples = 4;
  const Dataset ds = generate_dataset(spec);
  EXPECT_EQ(ds.meta.class_names.size(), 4u);
  for (const Sample& s : ds.samples) {
    EXPECT_EQ(s.mask.width(), 96);
    for (std::size_t i = 0; i < s.mask.size(); ++i) EXPECT_LE(s.mask[i], 3);
  }
}

TEST(Synthdata, FullAmbiguityMakesMirroredPartsIndistinguishable) {
  DatasetSpec spec;
  spec.samples = 200;
  spec.ambiguity = 1.0;
  const Dataset ds = generate_dataset(spec);
  double between = 0.0, floor = 0.0;
  for (const Sample& s : ds.samples) {
    const auto left = mean_color(s, 3), right = mean_color(s, 4);
    between += dist(left, right);
    // Noise floor: mean distance of a left-arm pixel from its class mean.
    double spread = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < s.mask.height(); ++r)
      for (int c = 0; c < s.mask.width(); ++c)
        if (s.mask.at(r, c) == 3) {
          const std::uint8_t* px = s.image.at(r, c);
          spread += dist({double(px[0]), double(px[1]), double(px[2])}, left);
          ++n;
        }
    floor += spread / static_cast<double>(n);
  }
  between /= 200.0;
  floor /= 200.0;
  EXPECT_LT(between, floor);

  spec.ambiguity = 0.0;
  const Dataset distinct = generate_dataset(spec);
  double apart = 0.0;
  for (const Sample& s : distinct.samples) apart += dist(mean_color(s, 3), mean_color(s, 4));
  EXPECT_GT(apart / 200.0, floor);
}

TEST(Synthdata, WriteLoadRoundTrip) {
  DatasetSpec spec;
  spec.samples = 6;
  const fs::path dir = scratch("roundtrip");
  write_dataset(spec, dir);
  EXPECT_TRUE(fs::exists(dir / "meta.json"));
  EXPECT_TRUE(fs::exists(dir / "images" / "000000.png"));
  EXPECT_TRUE(fs::exists(dir / "masks" / "000005.png"));
  const Dataset loaded = load_dataset(dir);
  const Dataset fresh = generate_dataset(spec);
  ASSERT_EQ(loaded.samples.size(), 6u);
  EXPECT_EQ(loaded.meta.class_names, fresh.meta.class_names);
  EXPECT_EQ(loaded.meta.flip_pairs, fresh.meta.flip_pairs);
  EXPECT_TRUE(loaded.meta.flips_enabled);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(loaded.samples[i].id, fresh.samples[i].id);
    EXPECT_EQ(loaded.samples[i].image, fresh.samples[i].image);
    EXPECT_EQ(loaded.samples[i].mask, fresh.samples[i].mask);
  }
  fs::remove_all(dir);
}

TEST(Synthdata, CorruptMaskRejected) {
  DatasetSpec spec;
  spec.samples = 2;
  const fs::path dir = scratch("corrupt");
  write_dataset(spec, dir);
  Sample s = generate_sample(spec, 1);
  std::vector<std::uint8_t> labels(s.mask.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = s.mask[i];
  labels[0] = static_cast<std::uint8_t>(spec.num_parts + 3);
  write_file(dir / "masks" / "000001.png", encode_png(64, 64, 1, labels));
  const DatasetMeta meta = load_meta(dir);
  EXPECT_NO_THROW(load_sample(dir, "000000", meta));
  try {
    load_sample(dir, "000001", meta);
    FAIL() << "expected corrupt mask";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::corrupt_data);
    EXPECT_NE(std::string(e.what()).find("corrupt mask"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Synthdata, MissingSample) {
  DatasetSpec spec;
  spec.samples = 2;
  const fs::path dir = scratch("missing");
  write_dataset(spec, dir);
  fs::remove(dir / "images" / "000001.png");
  const DatasetMeta meta = load_meta(dir);
  try {
    load_sample(dir, "000001", meta);
    FAIL() << "expected missing sample";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
    EXPECT_NE(std::string(e.what()).find("missing sample"), std::string::npos);
  }
  EXPECT_THROW(load_dataset(dir), Error);
  EXPECT_THROW(load_meta(dir / "nowhere"), Error);
  fs::remove_all(dir);
}

TEST(Synthdata, MissingFlipPairsDisablesFlips) {
  DatasetSpec spec;
  spec.samples = 1;
  const fs::path dir = scratch("noflip");
  write_dataset(spec, dir);
  nlohmann::json meta = nlohmann::json::parse(std::ifstream(dir / "meta.json"));
  meta.erase("flip_pairs");
  std::ofstream(dir / "meta.json") << meta.dump();
  const DatasetMeta loaded = load_meta(dir);
  EXPECT_FALSE(loaded.flips_enabled);
  EXPECT_TRUE(loaded.flip_pairs.empty());
  fs::remove_all(dir);
}

TEST(Synthdata, MalformedMetaRejected) {
  const fs::path dir = scratch("badmeta");
  fs::create_directories(dir);
  std::ofstream(dir / "meta.json") << "{not json";
  try {
    load_meta(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::corrupt_data);
  }
  fs::remove_all(dir);
}

TEST(Synthdata, ParitySplitIsDisjointAndExhaustive) {
  DatasetSpec spec;
  spec.samples = 11;
  const Dataset ds = generate_dataset(spec);
  const auto train = split_train(ds.samples), val = split_val(ds.samples);
  EXPECT_EQ(train.size(), 6u);
  EXPECT_EQ(val.size(), 5u);
  std::set<std::string> ids;
  for (const Sample& s : train) ids.insert(s.id);
  for (const Sample& s : val) EXPECT_TRUE(ids.insert(s.id).second);
  EXPECT_EQ(ids.size(), 11u);
  EXPECT_EQ(train[1].id, "000002");
  EXPECT_EQ(val[0].id, "000001");
}

TEST(Synthdata, SpecValidation) {
  DatasetSpec spec;
  spec.num_parts = 1;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.image_size = 16;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.ambiguity = 1.5;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  EXPECT_THROW(generate_sample(spec, spec.samples), Error);
}
