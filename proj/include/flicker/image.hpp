// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

namespace flicker {

/// Three-channel image, row-major HWC, values nominally in [0,1].
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, fill) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
  }
  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }
  std::size_t size() const { return data.size(); }
};

/// Channel-averaged mean intensity.
double mean_intensity(const Image& image);

void clamp_unit(Image& image);

/// Quantize to 8-bit levels and back (round(v*255)/255).
Image quantize8(const Image& image);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace flicker
