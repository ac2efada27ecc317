// SPDX-License-Identifier: Apache-2.0
#include "flicker/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "flicker/error.hpp"

namespace flicker {

double mean_intensity(const Image& image) {
  if (image.data.empty()) return 0.0;
  return std::accumulate(image.data.begin(), image.data.end(), 0.0) /
         static_cast<double>(image.data.size());
}

void clamp_unit(Image& image) {
  for (double& v : image.data) v = std::clamp(v, 0.0, 1.0);
}

namespace {
std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace

Image quantize8(const Image& image) {
  Image out = image;
  for (double& v : out.data) v = to_byte(v) / 255.0;
  return out;
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error("io", "cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw Error("io", "cannot decode PNG " + path.string() + ": " + msg);
  }
  Image image(static_cast<int>(png.height), static_cast<int>(png.width));
  std::transform(buffer.begin(), buffer.end(), image.data.begin(),
                 [](std::uint8_t b) { return b / 255.0; });
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> buffer(image.data.size());
  std::transform(image.data.begin(), image.data.end(), buffer.begin(), to_byte);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("io", "cannot write PNG " + path.string() + ": " + png.message);
  }
}

}  // namespace flicker
