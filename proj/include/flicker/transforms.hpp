// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "flicker/image.hpp"
#include "flicker/rng.hpp"

namespace flicker {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Sampling ranges of the viewpoint/lighting and color-error distributions.
/// Defaults are the published table values.
struct TransformRanges {
  Range rotation_deg{0.0, 360.0};
  bool flip_h = true;
  bool flip_v = true;
  Range translation_frac{0.0, 0.7};
  Range scale{1.0, 1.5};
  Range lighting_mult{0.8, 1.2};
  Range color_mult{0.7, 1.3};
  Range color_add{-0.2, 0.2};

  /// Throws on empty or inverted ranges.
  void validate() const;

  /// A degenerate distribution that always yields the identity.
  static TransformRanges identity();
};

/// One viewpoint/lighting draw.
struct TransformParams {
  double rotation_deg = 0.0;
  bool flip_h = false;
  bool flip_v = false;
  double translation_frac = 0.0;
  double translation_angle = 0.0;  // radians, direction of the shift
  double scale = 1.0;
  double lighting_mult = 1.0;
};

/// Per-channel color reproduction error. Affine (mult * x + add) unless
/// `poly[ch]` is non-empty, in which case that channel uses the polynomial
/// poly[0] x^n + ... + poly[n].
struct ColorError {
  std::array<double, 3> mult{1.0, 1.0, 1.0};
  std::array<double, 3> add{0.0, 0.0, 0.0};
  std::array<std::vector<double>, 3> poly;
};

TransformParams sample_transform(Rng& rng, const TransformRanges& ranges = {});
ColorError sample_color_error(Rng& rng, const TransformRanges& ranges = {});

/// Flips, rotation (bilinear), magnification about the center, translation
/// with edge-replicated fill; then the lighting multiplier when `is_ambient`;
/// then clamp to [0,1]. Apply the same params to both images of a pair.
Image apply_transform(const Image& image, const TransformParams& params, bool is_ambient);

/// Per-channel clamp(C(x), 0, 1).
Image apply_color_error(const Image& image, const ColorError& err);

/// dL/d(in) from dL/d(out); zero where the output was clamped.
Image apply_color_error_backward(const Image& input, const ColorError& err, const Image& upstream);

}  // namespace flicker
