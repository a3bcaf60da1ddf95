#include "ihp/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace ihp {

namespace fs = std::filesystem;

namespace {

// Unit directions at 22.5 degree steps, scaled by 1000: {drow, dcol}.
// Index 0 points right, 4 down, 8 left, 12 up.
constexpr int kDirections[16][2] = {{0, 1000},     {383, 924},   {707, 707},   {924, 383},
                                    {1000, 0},     {924, -383},  {707, -707},  {383, -924},
                                    {0, -1000},    {-383, -924}, {-707, -707}, {-924, -383},
                                    {-1000, 0},    {-924, 383},  {-707, 707},  {-383, 924}};

int mirror_direction(int k) { return ((8 - k) % 16 + 16) % 16; }

struct Point {
  long r;
  long c;
};

Point step(Point from, int direction, long length) {
  return Point{from.r + kDirections[direction][0] * length / 1000, from.c + kDirections[direction][1] * length / 1000};
}

// Integer point-in-capsule test (segment a-b, radius rad).
bool in_capsule(long r, long c, Point a, Point b, long rad) {
  const long vr = b.r - a.r, vc = b.c - a.c;
  const long wr = r - a.r, wc = c - a.c;
  const long len2 = vr * vr + vc * vc;
  const long dot = wr * vr + wc * vc;
  if (len2 == 0 || dot <= 0) return wr * wr + wc * wc <= rad * rad;
  if (dot >= len2) {
    const long er = r - b.r, ec = c - b.c;
    return er * er + ec * ec <= rad * rad;
  }
  return (wr * wr + wc * wc) * len2 - dot * dot <= rad * rad * len2;
}

struct Limb {
  Point root, joint, tip;
  long radius;
};

using Color = std::array<int, 3>;

constexpr Color kBaseColors[7] = {{0, 0, 0},      {224, 172, 132}, {196, 52, 60}, {60, 150, 70},
                                  {70, 90, 190},  {200, 170, 50},  {130, 60, 160}};

int clamp_byte(int v) { return std::clamp(v, 0, 255); }

// Maps the six drawn parts onto num_parts classes (extra parts merge into the last class).
int class_for_part(int part, int num_parts) { return std::min(part, num_parts); }

class Canvas {
 public:
  explicit Canvas(int size) : size_(size), image_(size, size), labels_(static_cast<std::size_t>(size) * size, 0) {}

  template <typename Inside>
  void paint(Inside inside, int label, const Color& color, int noise, Rng& rng) {
    for (int r = 0; r < size_; ++r)
      for (int c = 0; c < size_; ++c) {
        if (!inside(r, c)) continue;
        labels_[static_cast<std::size_t>(r) * size_ + c] = static_cast<std::uint8_t>(label);
        std::uint8_t* px = image_.at(r, c);
        for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<std::uint8_t>(clamp_byte(color[ch] + rng.uniform_int(-noise, noise)));
      }
  }

  RgbImage& image() { return image_; }
  std::vector<std::uint8_t>& labels() { return labels_; }

 private:
  int size_;
  RgbImage image_;
  std::vector<std::uint8_t> labels_;
};

constexpr int kPixelNoise = 12;

Sample render(const DatasetSpec& spec, int index, Rng rng) {
  const int s = spec.image_size;
  const auto u = [s](long v) { return v * s / 64; };  // lengths are authored on a 64-pixel canvas
  Canvas canvas(s);

  // Background: tilted stripes plus noise.
  const Color bg{rng.uniform_int(20, 235), rng.uniform_int(20, 235), rng.uniform_int(20, 235)};
  const int sa = rng.uniform_int(-3, 3), sb = rng.uniform_int(1, 3);
  const int period = rng.uniform_int(6, 12);
  const int amp = rng.uniform_int(10, 30);
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      const int phase = ((sa * r + sb * c) % (2 * period) + 2 * period) % (2 * period);
      const int shift = phase < period ? amp : -amp;
      std::uint8_t* px = canvas.image().at(r, c);
      for (int ch = 0; ch < 3; ++ch)
        px[ch] = static_cast<std::uint8_t>(clamp_byte(bg[ch] + shift + rng.uniform_int(-kPixelNoise, kPixelNoise)));
    }

  // Per-image colours; mirrored parts share one colour when ambiguous.
  std::array<Color, 7> colors{};
  for (int p = 1; p <= 6; ++p)
    for (int ch = 0; ch < 3; ++ch) colors[p][ch] = clamp_byte(kBaseColors[p][ch] + rng.uniform_int(-24, 24));
  if (rng.bernoulli(spec.ambiguity)) {
    colors[4] = colors[3];
    colors[6] = colors[5];
  }

  // Skeleton (64-pixel units, scaled by u()).
  const long cx = s / 2 + u(rng.uniform_int(-5, 5));
  const long torso_w = u(rng.uniform_int(14, 18));
  const long torso_h = u(rng.uniform_int(18, 22));
  const long top = u(rng.uniform_int(18, 22));
  const long head_r = u(rng.uniform_int(6, 8));
  const Point head{top - head_r + u(1), cx + u(rng.uniform_int(-2, 2))};
  const long left_edge = cx - torso_w / 2, right_edge = left_edge + torso_w - 1;

  const int occluding = rng.bernoulli(spec.occlusion) ? rng.uniform_int(3, 4) : 0;
  std::array<Limb, 7> limbs{};
  for (int part = 3; part <= 6; ++part) {
    const bool arm = part <= 4;
    const bool left = part % 2 == 1;
    int upper, lower;
    long upper_len, lower_len, radius;
    Point root;
    if (arm) {
      root = Point{top + u(3), left ? left_edge + u(2) : right_edge - u(2)};
      if (part == occluding) {
        upper = rng.uniform_int(4, 5);
        lower = rng.uniform_int(0, 1);
        lower_len = u(rng.uniform_int(13, 17));
      } else {
        upper = rng.uniform_int(5, 8);
        lower = std::clamp(upper + rng.uniform_int(-1, 1), 4, 8);
        lower_len = u(rng.uniform_int(9, 12));
      }
      upper_len = u(rng.uniform_int(10, 14));
      radius = u(rng.uniform_int(3, 4));
    } else {
      root = Point{top + torso_h - u(3), left ? cx - torso_w / 4 : cx + torso_w / 4};
      upper = rng.uniform_int(4, 5);
      lower = rng.uniform_int(4, 5);
      upper_len = u(rng.uniform_int(11, 14));
      lower_len = u(rng.uniform_int(9, 12));
      radius = u(rng.uniform_int(3, 5));
    }
    if (!left) {
      upper = mirror_direction(upper);
      lower = mirror_direction(lower);
    }
    const Point joint = step(root, upper, upper_len);
    limbs[part] = Limb{root, joint, step(joint, lower, lower_len), std::max(radius, 1L)};
  }

  auto limb_inside = [&](int part) {
    const Limb& l = limbs[part];
    return [l](int r, int c) { return in_capsule(r, c, l.root, l.joint, l.radius) || in_capsule(r, c, l.joint, l.tip, l.radius); };
  };
  auto paint_part = [&](int part, auto inside) {
    canvas.paint(inside, class_for_part(part, spec.num_parts), colors[part], kPixelNoise, rng);
  };

  for (int part : {5, 6}) paint_part(part, limb_inside(part));
  for (int part : {3, 4})
    if (part != occluding) paint_part(part, limb_inside(part));
  paint_part(2, [&](int r, int c) { return r >= top && r < top + torso_h && c >= left_edge && c <= right_edge; });
  paint_part(1, [&](int r, int c) {
    const long dr = r - head.r, dc = c - head.c;
    return dr * dr + dc * dc <= head_r * head_r;
  });
  if (occluding) paint_part(occluding, limb_inside(occluding));

  Sample out;
  out.id = sample_id(index);
  out.image = std::move(canvas.image());
  out.mask = LabelMask(s, s, spec.num_parts + 1, std::move(canvas.labels()));
  return out;
}

bool every_class_present(const LabelMask& mask) {
  std::vector<bool> seen(mask.num_classes(), false);
  for (std::size_t i = 0; i < mask.size(); ++i) seen[mask[i]] = true;
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_parts < 2 || num_parts > 6) fail(ErrorKind::invalid_argument, "synthetic figures support 2..6 part classes");
  if (image_size < 32) fail(ErrorKind::invalid_argument, "image_size must be >= 32");
  if (samples < 0) fail(ErrorKind::invalid_argument, "samples must be non-negative");
  if (ambiguity < 0.0 || ambiguity > 1.0 || occlusion < 0.0 || occlusion > 1.0)
    fail(ErrorKind::invalid_argument, "probabilities must lie in [0, 1]");
}

std::vector<std::string> DatasetSpec::class_names() const {
  static const char* kNames[7] = {"background", "head", "torso", "left-arm", "right-arm", "left-leg", "right-leg"};
  std::vector<std::string> names(kNames, kNames + num_parts + 1);
  if (num_parts < 6) names.back() = num_parts == 2 ? "body" : "limbs";
  return names;
}

std::array<std::uint8_t, 3> class_color(int class_id) {
  static constexpr std::array<std::uint8_t, 3> kPalette[] = {
      {0, 0, 0},     {255, 85, 0},   {255, 0, 85},  {0, 170, 255}, {0, 255, 170}, {170, 255, 0},
      {255, 255, 0}, {85, 0, 255},   {255, 0, 255}, {0, 85, 85},   {128, 128, 0}, {0, 128, 128}};
  constexpr int n = sizeof(kPalette) / sizeof(kPalette[0]);
  return kPalette[((class_id % n) + n) % n];
}

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

Sample generate_sample(const DatasetSpec& spec, int index) {
  spec.validate();
  if (index < 0 || index >= spec.samples) fail(ErrorKind::invalid_argument, "sample index out of range");
  const Rng base(spec.seed);
  for (std::uint64_t attempt = 0;; ++attempt) {
    Sample s = render(spec, index, base.fork(static_cast<std::uint64_t>(index) * 1024 + attempt));
    if (every_class_present(s.mask)) return s;
  }
}

DatasetMeta make_meta(const DatasetSpec& spec) {
  DatasetMeta meta;
  meta.class_names = spec.class_names();
  for (auto [a, b] : spec.flip_pairs)
    if (a != b && a >= 1 && b >= 1 && a <= spec.num_parts && b <= spec.num_parts) meta.flip_pairs.emplace_back(a, b);
  for (int i = 0; i < spec.samples; ++i) meta.ids.push_back(sample_id(i));
  meta.generator = {{"num_parts", spec.num_parts}, {"image_size", spec.image_size}, {"samples", spec.samples},
                    {"seed", spec.seed},           {"ambiguity", spec.ambiguity},   {"occlusion", spec.occlusion}};
  return meta;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.meta = make_meta(spec);
  ds.samples.resize(spec.samples);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < spec.samples; ++i) ds.samples[i] = generate_sample(spec, i);
  return ds;
}

nlohmann::json to_json(const DatasetMeta& meta) {
  nlohmann::json pairs = nlohmann::json::array();
  for (auto [a, b] : meta.flip_pairs) pairs.push_back({a, b});
  nlohmann::json j = {{"num_classes", meta.num_classes()},
                      {"class_names", meta.class_names},
                      {"flip_pairs", pairs},
                      {"ids", meta.ids}};
  if (!meta.generator.is_null()) j["generator"] = meta.generator;
  return j;
}

DatasetMeta meta_from_json(const nlohmann::json& j) {
  DatasetMeta meta;
  try {
    meta.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("num_classes") && j.at("num_classes").get<int>() != meta.num_classes())
      fail(ErrorKind::corrupt_data, "meta.json num_classes disagrees with class_names");
    if (j.contains("flip_pairs")) {
      for (const auto& p : j.at("flip_pairs")) meta.flip_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    } else {
      std::clog << "warning: meta.json has no flip_pairs; horizontal flips disabled\n";
      meta.flips_enabled = false;
    }
    if (j.contains("ids")) meta.ids = j.at("ids").get<std::vector<std::string>>();
    if (j.contains("generator")) meta.generator = j.at("generator");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_data, std::string("malformed meta.json: ") + e.what());
  }
  if (meta.num_classes() < 2) fail(ErrorKind::corrupt_data, "meta.json must name at least two classes");
  return meta;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  DatasetMeta meta = dataset.meta;
  meta.ids.clear();
  for (const Sample& s : dataset.samples) {
    write_file(dir / "images" / (s.id + ".png"), encode_rgb_png(s.image));
    write_file(dir / "masks" / (s.id + ".png"), encode_mask_png(s.mask));
    meta.ids.push_back(s.id);
  }
  const std::string text = to_json(meta).dump(2) + "\n";
  write_file(dir / "meta.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_dataset(const DatasetSpec& spec, const fs::path& dir) { write_dataset(generate_dataset(spec), dir); }

DatasetMeta load_meta(const fs::path& dir) {
  const fs::path path = dir / "meta.json";
  if (!fs::exists(path)) fail(ErrorKind::not_found, "missing meta.json in " + dir.string());
  const std::vector<std::uint8_t> bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_data, std::string("malformed meta.json: ") + e.what());
  }
  DatasetMeta meta = meta_from_json(j);
  if (meta.ids.empty() && fs::exists(dir / "images")) {
    for (const auto& entry : fs::directory_iterator(dir / "images"))
      if (entry.path().extension() == ".png") meta.ids.push_back(entry.path().stem().string());
    std::sort(meta.ids.begin(), meta.ids.end());
  }
  return meta;
}

Sample load_sample(const fs::path& dir, const std::string& id, const DatasetMeta& meta) {
  const fs::path image_path = dir / "images" / (id + ".png");
  const fs::path mask_path = dir / "masks" / (id + ".png");
  if (!fs::exists(image_path) || !fs::exists(mask_path)) fail(ErrorKind::not_found, "missing sample " + id);
  Sample s;
  s.id = id;
  s.image = decode_rgb_png(read_file(image_path));
  PngImage m = decode_png(read_file(mask_path));
  if (m.channels != 1) fail(ErrorKind::corrupt_data, "corrupt mask: " + id + " is not single-channel");
  if (m.height != s.image.height || m.width != s.image.width)
    fail(ErrorKind::corrupt_data, "corrupt mask: " + id + " does not match its image");
  for (std::uint8_t v : m.pixels)
    if (v >= meta.num_classes()) fail(ErrorKind::corrupt_data, "corrupt mask: " + id + " has label " + std::to_string(v));
  s.mask = LabelMask(m.height, m.width, meta.num_classes(), std::move(m.pixels));
  return s;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.meta = load_meta(dir);
  for (const std::string& id : ds.meta.ids) ds.samples.push_back(load_sample(dir, id, ds.meta));
  return ds;
}

std::vector<Sample> split_train(const std::vector<Sample>& samples) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < samples.size(); i += 2) out.push_back(samples[i]);
  return out;
}

std::vector<Sample> split_val(const std::vector<Sample>& samples) {
  std::vector<Sample> out;
  for (std::size_t i = 1; i < samples.size(); i += 2) out.push_back(samples[i]);
  return out;
}

}  // namespace ihp
