#include "ihp/clickmap.hpp"

#include <algorithm>
#include <sstream>

namespace ihp {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::init:
      return "init";
    case Phase::extra:
      return "extra";
    case Phase::correction:
      return "correction";
  }
  return "init";
}

Phase phase_from_string(std::string_view s) {
  if (s == "init") return Phase::init;
  if (s == "extra") return Phase::extra;
  if (s == "correction") return Phase::correction;
  fail(ErrorKind::invalid_argument, "unknown click phase '" + std::string(s) + "'");
}

std::vector<Click> ClickSet::per_class(int class_id) const {
  std::vector<Click> out;
  for (const Click& c : clicks_)
    if (c.class_id == class_id) out.push_back(c);
  return out;
}

std::size_t ClickSet::count(int class_id) const {
  return static_cast<std::size_t>(
      std::count_if(clicks_.begin(), clicks_.end(), [&](const Click& c) { return c.class_id == class_id; }));
}

LocalizationTensor encode_clicks(const ClickSet& clicks, int height, int width, int num_classes) {
  for (const Click& c : clicks) {
    if (c.row < 0 || c.col < 0 || c.row >= height || c.col >= width) fail(ErrorKind::invalid_argument, "click outside image");
    if (c.class_id < 0 || c.class_id >= num_classes) fail(ErrorKind::invalid_argument, "unknown class");
  }
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  LocalizationTensor out{num_classes, height, width, std::vector<float>(plane * num_classes, kClickMapCeiling)};
  std::vector<std::uint8_t> sources(plane);
  for (int k = 0; k < num_classes; ++k) {
    std::fill(sources.begin(), sources.end(), 0);
    bool any = false;
    for (const Click& c : clicks) {
      if (c.class_id != k) continue;
      sources[static_cast<std::size_t>(c.row) * width + c.col] = 1;
      any = true;
    }
    if (!any) continue;
    const std::vector<double> sq = squared_distance_transform(height, width, sources);
    float* dst = out.values.data() + plane * k;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(std::min(sq[i], 255.0));
  }
  return out;
}

NetworkInput assemble_input(const RgbImage& image, const LocalizationTensor& maps) {
  if (image.height != maps.height || image.width != maps.width)
    fail(ErrorKind::invalid_argument, "image and localization maps differ in shape");
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  NetworkInput in{3 + maps.num_maps, image.height, image.width,
                  std::vector<float>(plane * (3 + static_cast<std::size_t>(maps.num_maps)))};
  for (std::size_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < 3; ++ch) in.values[ch * plane + i] = image.pixels[3 * i + ch] / 255.0f;
  for (std::size_t i = 0; i < maps.values.size(); ++i) in.values[3 * plane + i] = maps.values[i] / 255.0f;
  return in;
}

std::string to_line(const Click& click) {
  std::ostringstream os;
  os << click.row << ' ' << click.col << ' ' << click.class_id << ' ' << to_string(click.phase) << ' ' << click.round;
  return os.str();
}

Click click_from_line(std::string_view line) {
  std::istringstream is{std::string(line)};
  Click c;
  std::string phase;
  if (!(is >> c.row >> c.col >> c.class_id >> phase >> c.round)) fail(ErrorKind::invalid_argument, "malformed click record");
  c.phase = phase_from_string(phase);
  return c;
}

nlohmann::json to_json(const Click& click) {
  return {{"row", click.row},
          {"col", click.col},
          {"class_id", click.class_id},
          {"phase", std::string(to_string(click.phase))},
          {"round", click.round}};
}

Click click_from_json(const nlohmann::json& j) {
  try {
    Click c;
    c.row = j.at("row").get<int>();
    c.col = j.at("col").get<int>();
    c.class_id = j.at("class_id").get<int>();
    c.phase = j.contains("phase") ? phase_from_string(j.at("phase").get<std::string>()) : Phase::correction;
    c.round = j.value("round", 0);
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("malformed click: ") + e.what());
  }
}

nlohmann::json to_json(const ClickSet& clicks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Click& c : clicks) arr.push_back(to_json(c));
  return arr;
}

ClickSet clickset_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(ErrorKind::invalid_argument, "click list must be a JSON array");
  ClickSet out;
  for (const auto& item : j) out.add(click_from_json(item));
  return out;
}

}  // namespace ihp
