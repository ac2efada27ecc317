// SPDX-License-Identifier: Apache-2.0
#include "flicker/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flicker/error.hpp"

namespace flicker {

void TransformRanges::validate() const {
  auto check = [](const Range& r, const char* name) {
    require(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi, "invalid_config",
            std::string("transform range ") + name + " must satisfy lo <= hi");
  };
  check(rotation_deg, "rotation_deg");
  check(translation_frac, "translation_frac");
  check(scale, "scale");
  check(lighting_mult, "lighting_mult");
  check(color_mult, "color_mult");
  check(color_add, "color_add");
  require(scale.lo > 0.0, "invalid_config", "scale range must be positive");
  require(translation_frac.lo >= 0.0, "invalid_config", "translation_frac must be >= 0");
}

TransformRanges TransformRanges::identity() {
  TransformRanges r;
  r.rotation_deg = {0.0, 0.0};
  r.flip_h = false;
  r.flip_v = false;
  r.translation_frac = {0.0, 0.0};
  r.scale = {1.0, 1.0};
  r.lighting_mult = {1.0, 1.0};
  r.color_mult = {1.0, 1.0};
  r.color_add = {0.0, 0.0};
  return r;
}

namespace {
double draw(Rng& rng, const Range& r) { return r.lo == r.hi ? r.lo : uniform(rng, r.lo, r.hi); }
}  // namespace

TransformParams sample_transform(Rng& rng, const TransformRanges& ranges) {
  TransformParams p;
  // Every field consumes its draws regardless of the ranges so that streams
  // stay aligned when a range is collapsed.
  p.rotation_deg = draw(rng, ranges.rotation_deg);
  const bool fh = uniform_int(rng, 0, 1) == 1;
  const bool fv = uniform_int(rng, 0, 1) == 1;
  p.flip_h = ranges.flip_h && fh;
  p.flip_v = ranges.flip_v && fv;
  p.translation_frac = draw(rng, ranges.translation_frac);
  p.translation_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  p.scale = draw(rng, ranges.scale);
  p.lighting_mult = draw(rng, ranges.lighting_mult);
  return p;
}

ColorError sample_color_error(Rng& rng, const TransformRanges& ranges) {
  ColorError err;
  for (int c = 0; c < 3; ++c) {
    err.mult[c] = draw(rng, ranges.color_mult);
    err.add[c] = draw(rng, ranges.color_add);
  }
  return err;
}

namespace {

// cos/sin with exact values at multiples of 90 degrees.
void exact_rotation(double degrees, double& cs, double& sn) {
  const double rad = degrees * std::numbers::pi / 180.0;
  cs = std::cos(rad);
  sn = std::sin(rad);
  auto snap = [](double v) {
    if (std::abs(v) < 1e-12) return 0.0;
    if (std::abs(v - 1.0) < 1e-12) return 1.0;
    if (std::abs(v + 1.0) < 1e-12) return -1.0;
    return v;
  };
  cs = snap(cs);
  sn = snap(sn);
}

double sample_bilinear(const Image& img, double sy, double sx, int c) {
  sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const double fy = sy - y0;
  const double fx = sx - x0;
  if (fy == 0.0 && fx == 0.0) return img.at(y0, x0, c);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
  const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

}  // namespace

Image apply_transform(const Image& image, const TransformParams& params, bool is_ambient) {
  const int h = image.height;
  const int w = image.width;
  Image out(h, w);
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  double cs = 1.0;
  double sn = 0.0;
  exact_rotation(params.rotation_deg, cs, sn);
  const double shift = params.translation_frac * std::min(h, w) / 2.0;
  const double ty = params.translation_frac == 0.0 ? 0.0 : shift * std::sin(params.translation_angle);
  const double tx = params.translation_frac == 0.0 ? 0.0 : shift * std::cos(params.translation_angle);
  const double inv_scale = 1.0 / params.scale;
  const double light = is_ambient ? params.lighting_mult : 1.0;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Invert translation, then magnification, then rotation, then flips.
      double dy = (y - ty) - cy;
      double dx = (x - tx) - cx;
      dy *= inv_scale;
      dx *= inv_scale;
      // Forward rotation maps (dx, dy) -> (cs*dx - sn*dy, sn*dx + cs*dy); invert it.
      const double ry = -sn * dx + cs * dy;
      const double rx = cs * dx + sn * dy;
      double sy = ry + cy;
      double sx = rx + cx;
      if (params.flip_v) sy = (h - 1) - sy;
      if (params.flip_h) sx = (w - 1) - sx;
      for (int c = 0; c < Image::kChannels; ++c) {
        double v = sample_bilinear(image, sy, sx, c);
        if (light != 1.0) v *= light;
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

namespace {

double color_map(const ColorError& err, int c, double x) {
  const auto& poly = err.poly[c];
  if (poly.empty()) return err.mult[c] * x + err.add[c];
  double acc = 0.0;
  for (double coeff : poly) acc = acc * x + coeff;
  return acc;
}

double color_slope(const ColorError& err, int c, double x) {
  const auto& poly = err.poly[c];
  if (poly.empty()) return err.mult[c];
  const int n = static_cast<int>(poly.size()) - 1;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc = acc * x + poly[i] * (n - i);
  return acc;
}

}  // namespace

Image apply_color_error(const Image& image, const ColorError& err) {
  Image out(image.height, image.width);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const int c = static_cast<int>(i % Image::kChannels);
    out.data[i] = std::clamp(color_map(err, c, image.data[i]), 0.0, 1.0);
  }
  return out;
}

Image apply_color_error_backward(const Image& input, const ColorError& err, const Image& upstream) {
  require(input.same_shape(upstream), "shape_mismatch",
          "apply_color_error_backward: gradient shape differs from input");
  Image grad(input.height, input.width);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const int c = static_cast<int>(i % Image::kChannels);
    const double y = color_map(err, c, input.data[i]);
    if (y <= 0.0 || y >= 1.0) continue;
    grad.data[i] = upstream.data[i] * color_slope(err, c, input.data[i]);
  }
  return grad;
}

}  // namespace flicker
