// SPDX-License-Identifier: Apache-2.0
#include "flicker/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "flicker/error.hpp"

namespace flicker {

const std::vector<std::string>& shape_labels() {
  static const std::vector<std::string> labels{"disk",     "ring", "square",   "square frame",
                                               "triangle", "plus", "star",     "crescent",
                                               "stripes",  "ellipse"};
  return labels;
}

namespace {

constexpr double kPi = std::numbers::pi;

// Membership test in shape-local coordinates scaled by the shape radius.
bool inside(int label, double u, double v) {
  const double r2 = u * u + v * v;
  const double au = std::abs(u);
  const double av = std::abs(v);
  switch (label) {
    case 0:  // disk
      return r2 <= 1.0;
    case 1:  // ring
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    case 2:  // square
      return std::max(au, av) <= 0.8;
    case 3: {  // square frame
      const double m = std::max(au, av);
      return m <= 0.85 && m >= 0.5;
    }
    case 4: {  // triangle, circumradius 1
      for (double deg : {-90.0, 30.0, 150.0}) {
        const double a = deg * kPi / 180.0;
        if (u * std::cos(a) + v * std::sin(a) > 0.5) return false;
      }
      return true;
    }
    case 5:  // plus
      return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case 6: {  // five-pointed star
      const double period = 2.0 * kPi / 5.0;
      double phi = std::fmod(std::atan2(v, u) + 2.0 * kPi + kPi / 2.0, period) / period;
      const double tri = std::abs(2.0 * phi - 1.0);  // 1 at points, 0 between
      return std::sqrt(r2) <= 0.42 + 0.58 * tri;
    }
    case 7:  // crescent
      return r2 <= 1.0 && (u - 0.45) * (u - 0.45) + v * v > 0.75 * 0.75;
    case 8:  // three parallel bars
      return au <= 1.0 && av <= 1.0 && (av <= 0.2 || av >= 0.6);
    case 9:  // ellipse
      return u * u + (v / 0.45) * (v / 0.45) <= 1.0;
    default:
      throw Error("invalid_class", "shape label out of range");
  }
}

double luminance(const std::array<double, 3>& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

}  // namespace

Image render_shape(int label, int size, Rng& rng) {
  require(label >= 0 && label < 10, "invalid_class", "shape label out of range");
  require(size >= 8, "invalid_config", "shape images must be at least 8 pixels wide");

  std::array<double, 3> bg{};
  for (double& c : bg) c = uniform(rng, 0.15, 0.85);
  std::array<double, 3> fg{};
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (double& c : fg) c = uniform(rng, 0.0, 1.0);
    if (std::abs(luminance(fg) - luminance(bg)) >= 0.3) break;
  }

  // Low-frequency texture: a coarse random grid, bilinearly upsampled.
  constexpr int kGrid = 6;
  std::array<std::array<std::array<double, 3>, kGrid>, kGrid> grid{};
  for (auto& row : grid)
    for (auto& cell : row)
      for (double& c : cell) c = uniform(rng, -0.12, 0.12);

  const double cx = size / 2.0 + uniform(rng, -0.08, 0.08) * size;
  const double cy = size / 2.0 + uniform(rng, -0.08, 0.08) * size;
  const double radius = uniform(rng, 0.2, 0.3) * size;
  const double theta = uniform(rng, 0.0, 2.0 * kPi);
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double shade = uniform(rng, -0.15, 0.15);

  Image img(size, size);
  constexpr int kSuper = 3;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper - cx;
          const double py = y + (sy + 0.5) / kSuper - cy;
          const double u = (cs * px + sn * py) / radius;
          const double v = (-sn * px + cs * py) / radius;
          hits += inside(label, u, v) ? 1 : 0;
        }
      }
      const double coverage = hits / double(kSuper * kSuper);
      const double gy = double(y) / size * (kGrid - 1);
      const double gx = double(x) / size * (kGrid - 1);
      const int y0 = static_cast<int>(gy);
      const int x0 = static_cast<int>(gx);
      const double fy = gy - y0;
      const double fx = gx - x0;
      for (int c = 0; c < 3; ++c) {
        const double tex = grid[y0][x0][c] * (1 - fy) * (1 - fx) + grid[y0][x0 + 1][c] * (1 - fy) * fx +
                           grid[y0 + 1][x0][c] * fy * (1 - fx) + grid[y0 + 1][x0 + 1][c] * fy * fx;
        const double lit = fg[c] * (1.0 + shade * ((y - cy) / radius));
        img.at(y, x, c) = std::clamp((1.0 - coverage) * (bg[c] + tex) + coverage * lit, 0.0, 1.0);
      }
    }
  }
  for (double& v : img.data) v = std::clamp(v + uniform(rng, -0.03, 0.03), 0.0, 1.0);

  // Global exposure: scale toward a random mean brightness.
  const double target = uniform(rng, 0.22, 0.7);
  const double mean = mean_intensity(img);
  if (mean > 1e-6) {
    const double k = target / mean;
    for (double& v : img.data) v = std::clamp(v * k, 0.0, 1.0);
  }
  return img;
}

Image shape_sample(const ShapeDatasetSpec& spec, Split split, int index) {
  Rng rng = make_rng(spec.seed, streams::kDataset * 16 + static_cast<int>(split), index);
  return render_shape(index % 10, spec.size, rng);
}

Dataset generate_shapes(const ShapeDatasetSpec& spec, Split split) {
  const int count = split == Split::kTrain ? spec.train_count : spec.test_count;
  require(count >= 0, "invalid_config", "dataset size must be non-negative");
  Dataset ds;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (int i = 0; i < count; ++i) {
    ds.images.push_back(shape_sample(spec, split, i));
    ds.labels.push_back(i % 10);
  }
  return ds;
}

}  // namespace flicker
