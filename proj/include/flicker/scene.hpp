// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flicker/image.hpp"
#include "flicker/render.hpp"

namespace flicker {

/// Default scene brightness: ambient-only and fully lit mean pixel values.
inline constexpr double kDefaultAmbientMean = 85.0 / 255.0;
inline constexpr double kDefaultFullMean = 160.0 / 255.0;

/// Scale `base` so its channel-averaged mean equals `target_mean`, clamping
/// to [0,1] and rescaling until the mean is within `tolerance`.
/// Throws Error("unreachable_mean") when no scale can reach the target.
Image scale_to_mean(const Image& base, double target_mean, double tolerance = 1e-6);

/// Scene pair from one base image: the ambient image at `ambient_mean`, the
/// fully lit image at `full_mean`. Requires 0 < ambient_mean < full_mean <= 1.
ScenePair synth_scene(const Image& base, double ambient_mean = kDefaultAmbientMean,
                      double full_mean = kDefaultFullMean);

/// Family of scene pairs with a fixed ambient image and an attacker light
/// whose strength is set by the ambient fraction a of the total linear light:
/// full = clamp(ambient * a^(-1/gamma)). a = 1 means no attacker light.
struct AmbientSceneModel {
  Image ambient;
  double gamma = 2.2;

  ScenePair at(double ambient_fraction) const;

  /// Ambient fraction implied by a pair whose full image is a uniform
  /// brightening of the ambient one (ratio of means, linearized).
  static double fraction_of(const ScenePair& scene, double gamma);
};

}  // namespace flicker
