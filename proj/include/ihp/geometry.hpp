#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "ihp/common.hpp"

namespace ihp {

/// H×W grid of class indices; 0 is background, parts are 1..num_classes-1.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(int height, int width, int num_classes, std::uint8_t fill = 0);
  LabelMask(int height, int width, int num_classes, std::vector<std::uint8_t> labels);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return labels_.size(); }

  std::uint8_t at(int row, int col) const { return labels_[index(row, col)]; }
  void set(int row, int col, std::uint8_t label);
  std::uint8_t operator[](std::size_t i) const { return labels_[i]; }

  std::span<const std::uint8_t> labels() const { return labels_; }
  bool in_bounds(int row, int col) const { return row >= 0 && col >= 0 && row < height_ && col < width_; }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// One 8-connected component. Pixels are stored in row-major order, so
/// pixels.front() is the lexicographically minimal pixel.
struct PartComponent {
  int class_id = 0;
  std::vector<Pixel> pixels;
  std::vector<Pixel> boundary;
  std::size_t area() const { return pixels.size(); }
};

struct DistanceField {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// Unordered class pairs stored as (min, max).
using AdjacencyPairs = std::set<std::pair<int, int>>;

/// Components of `class_id`, largest first; ties go to the component whose
/// minimal pixel is lexicographically smaller.
std::vector<PartComponent> connected_components(const LabelMask& mask, int class_id);

/// Same ordering contract over an arbitrary membership grid (nonzero = inside).
std::vector<PartComponent> connected_components(int height, int width, std::span<const std::uint8_t> inside,
                                                int class_id);

/// Pixels of `pixels` with an 8-neighbour outside the set or outside the image.
std::vector<Pixel> inner_boundary(int height, int width, std::span<const Pixel> pixels);

/// Exact Euclidean distance from every pixel to the nearest source pixel.
DistanceField distance_to_set(int height, int width, std::span<const Pixel> source);

/// Exact squared Euclidean distance transform (OpenMP-parallel separable
/// lower-envelope pass). Pixels with source[i] != 0 are sources; with no
/// sources every value is +inf.
std::vector<double> squared_distance_transform(int height, int width, std::span<const std::uint8_t> source);

namespace reference {
/// Serial scan over every source pixel, O(n * sources).
std::vector<double> squared_distance_transform(int height, int width, std::span<const std::uint8_t> source);
}  // namespace reference

/// {m, n} is included iff some class-m pixel has a class-n 8-neighbour.
AdjacencyPairs part_adjacency(const LabelMask& mask);

/// Flags the inner boundary pixels of every non-background component.
std::vector<std::uint8_t> part_boundary_union(const LabelMask& mask);

double min_distance(Pixel p, std::span<const Pixel> set);

}  // namespace ihp
