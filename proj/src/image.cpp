#include "ihp/image.hpp"

#include <png.h>

#include <cstring>
#include <fstream>

namespace ihp {

std::vector<std::uint8_t> encode_png(int height, int width, int channels, std::span<const std::uint8_t> pixels) {
  if (channels != 1 && channels != 3) fail(ErrorKind::invalid_argument, "unsupported channel count");
  if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
    fail(ErrorKind::invalid_argument, "pixel buffer does not match image shape");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
    fail(ErrorKind::runtime, std::string("png encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
    fail(ErrorKind::runtime, std::string("png encode failed: ") + image.message);
  out.resize(size);
  png_image_free(&image);
  return out;
}

PngImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    fail(ErrorKind::invalid_argument, "invalid image");
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  PngImage out;
  out.height = static_cast<int>(image.height);
  out.width = static_cast<int>(image.width);
  out.channels = gray ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  // Gray background composites away any alpha channel.
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorKind::invalid_argument, "invalid image");
  }
  png_image_free(&image);
  return out;
}

std::vector<std::uint8_t> encode_rgb_png(const RgbImage& image) {
  return encode_png(image.height, image.width, 3, image.pixels);
}

std::vector<std::uint8_t> encode_mask_png(const LabelMask& mask) {
  return encode_png(mask.height(), mask.width(), 1, mask.labels());
}

RgbImage decode_rgb_png(std::span<const std::uint8_t> bytes) {
  PngImage png = decode_png(bytes);
  RgbImage out(png.height, png.width);
  if (png.channels == 3) {
    out.pixels = std::move(png.pixels);
  } else {
    for (std::size_t i = 0; i < png.pixels.size(); ++i)
      out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = png.pixels[i];
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::not_found, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::runtime, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ihp
