#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ihp/geometry.hpp"
#include "ihp/image.hpp"
#include "json.hpp"

namespace ihp {

enum class Phase { init, extra, correction };

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view s);

struct Click {
  int row = 0;
  int col = 0;
  int class_id = 0;
  Phase phase = Phase::init;
  int round = 0;

  Pixel pixel() const { return {row, col}; }
  friend bool operator==(const Click&, const Click&) = default;
};

/// Insertion-ordered click list. Order matters: the service undoes from the back.
class ClickSet {
 public:
  ClickSet() = default;
  explicit ClickSet(std::vector<Click> clicks) : clicks_(std::move(clicks)) {}

  void add(const Click& click) { clicks_.push_back(click); }
  void append(const ClickSet& other) { clicks_.insert(clicks_.end(), other.clicks_.begin(), other.clicks_.end()); }
  void pop_back() { clicks_.pop_back(); }
  void remove_class(int class_id) {
    std::erase_if(clicks_, [class_id](const Click& c) { return c.class_id == class_id; });
  }

  std::size_t size() const { return clicks_.size(); }
  bool empty() const { return clicks_.empty(); }
  const Click& operator[](std::size_t i) const { return clicks_[i]; }
  const Click& back() const { return clicks_.back(); }
  auto begin() const { return clicks_.begin(); }
  auto end() const { return clicks_.end(); }
  const std::vector<Click>& clicks() const { return clicks_; }

  std::vector<Click> per_class(int class_id) const;
  std::size_t count(int class_id) const;

  friend bool operator==(const ClickSet&, const ClickSet&) = default;

 private:
  std::vector<Click> clicks_;
};

/// (num_classes)×H×W truncated squared-distance maps, values in [0, 255].
struct LocalizationTensor {
  int num_maps = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int map, int row, int col) const {
    return values[(static_cast<std::size_t>(map) * height + row) * width + col];
  }
};

/// (3 + num_classes)×H×W planar float input: RGB/255 then maps/255.
struct NetworkInput {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int channel, int row, int col) const {
    return values[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
};

inline constexpr float kClickMapCeiling = 255.0f;

/// map_i[p] = min(255, min over class-i clicks q of |p - q|^2); 255 where class i has no click.
LocalizationTensor encode_clicks(const ClickSet& clicks, int height, int width, int num_classes);

NetworkInput assemble_input(const RgbImage& image, const LocalizationTensor& maps);

/// Line record: "row col class_id phase round".
std::string to_line(const Click& click);
Click click_from_line(std::string_view line);

nlohmann::json to_json(const Click& click);
Click click_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClickSet& clicks);
ClickSet clickset_from_json(const nlohmann::json& j);

}  // namespace ihp
