// SPDX-License-Identifier: Apache-2.0
#include "flicker/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flicker/error.hpp"

namespace flicker {

Image scale_to_mean(const Image& base, double target_mean, double tolerance) {
  require(target_mean > 0.0 && target_mean <= 1.0, "invalid_config",
          "target mean must lie in (0, 1]");
  const double base_mean = mean_intensity(base);
  require(base_mean > 0.0, "unreachable_mean", "base image is black; no scale reaches the target mean");
  double k = target_mean / base_mean;
  Image out = base;
  for (int iter = 0; iter < 200; ++iter) {
    for (std::size_t i = 0; i < base.data.size(); ++i) out.data[i] = std::clamp(base.data[i] * k, 0.0, 1.0);
    const double mean = mean_intensity(out);
    if (std::abs(mean - target_mean) <= tolerance) return out;
    if (mean <= 0.0) break;
    k *= target_mean / mean;
  }
  const double reached = mean_intensity(out);
  require(std::abs(reached - target_mean) <= 1.0 / 255.0, "unreachable_mean",
          "cannot scale image to mean " + std::to_string(target_mean) + " (reached " +
              std::to_string(reached) + ")");
  return out;
}

ScenePair synth_scene(const Image& base, double ambient_mean, double full_mean) {
  require(ambient_mean > 0.0 && ambient_mean < full_mean && full_mean <= 1.0, "invalid_config",
          "scene means must satisfy 0 < ambient_mean < full_mean <= 1");
  return ScenePair{scale_to_mean(base, ambient_mean), scale_to_mean(base, full_mean)};
}

ScenePair AmbientSceneModel::at(double ambient_fraction) const {
  require(ambient_fraction > 0.0 && ambient_fraction <= 1.0, "invalid_config",
          "ambient fraction must lie in (0, 1]");
  require(gamma > 0.0, "invalid_gamma", "gamma must be > 0");
  ScenePair pair{ambient, ambient};
  const double k = std::pow(ambient_fraction, -1.0 / gamma);
  for (double& v : pair.full.data) v = std::clamp(v * k, 0.0, 1.0);
  return pair;
}

double AmbientSceneModel::fraction_of(const ScenePair& scene, double gamma) {
  scene.validate();
  const double amb = mean_intensity(scene.ambient);
  const double full = mean_intensity(scene.full);
  require(full > 0.0, "invalid_scene", "fully lit image is black");
  return std::clamp(std::pow(amb / full, gamma), 0.0, 1.0);
}

}  // namespace flicker
