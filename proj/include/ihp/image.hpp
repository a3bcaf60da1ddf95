#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ihp/geometry.hpp"

namespace ihp {

/// 8-bit RGB image, interleaved row-major.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t* at(int row, int col) { return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 3; }
  const std::uint8_t* at(int row, int col) const {
    return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 3;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Decoded 8-bit PNG with 1 (gray) or 3 (RGB) channels.
struct PngImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> encode_png(int height, int width, int channels, std::span<const std::uint8_t> pixels);
/// Decodes any PNG libpng understands into 8-bit gray or RGB (alpha dropped,
/// palette expanded). Throws Error(invalid_argument, "invalid image") on failure.
PngImage decode_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_rgb_png(const RgbImage& image);
std::vector<std::uint8_t> encode_mask_png(const LabelMask& mask);
RgbImage decode_rgb_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ihp
