// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "flicker/camera.hpp"
#include "flicker/image.hpp"
#include "flicker/render.hpp"
#include "flicker/rng.hpp"

namespace flicker::fixtures {

inline Image random_image(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image img(h, w);
  for (double& v : img.data) v = uniform(rng, lo, hi);
  return img;
}

/// Pair with full strictly brighter than ambient so nothing saturates.
inline ScenePair random_scene(int h, int w, Rng& rng) {
  ScenePair s{Image(h, w), Image(h, w)};
  for (std::size_t i = 0; i < s.ambient.data.size(); ++i) {
    s.ambient.data[i] = uniform(rng, 0.05, 0.45);
    s.full.data[i] = s.ambient.data[i] + uniform(rng, 0.1, 0.45);
  }
  return s;
}

inline ChannelMatrix random_signal(int length, Rng& rng) {
  ChannelMatrix m(3, length);
  for (double& v : m.data) v = uniform(rng, 0.0, 1.0);
  return m;
}

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Row gains by brute force at 1 us resolution: the signal is a periodic
/// step function with slot width readout_us, shifted by delta slots, and row y
/// integrates it over [y*t_r, y*t_r + t_e). Needs integer-us timings.
inline RowGain brute_force_gain(const ChannelMatrix& signal, int delta, const CameraTimings& t) {
  const long tr = std::lround(t.readout_us);
  const long te = std::lround(t.exposure_us);
  const long period = tr * signal.length;
  RowGain g(signal.channels, t.rows);
  for (int c = 0; c < signal.channels; ++c) {
    for (int y = 0; y < t.rows; ++y) {
      double acc = 0.0;
      for (long k = 0; k < te; ++k) {
        const double time = double(y * tr + k) + 0.5 + double(delta * tr);
        const long slot = (static_cast<long>(std::floor(time)) % period) / tr;
        acc += signal.at(c, static_cast<int>(slot));
      }
      g.at(c, y) = acc / double(te);
    }
  }
  return g;
}

inline Image brute_force_render(const ScenePair& scene, const ChannelMatrix& signal, int delta,
                                const CameraTimings& t) {
  const RowGain g = brute_force_gain(signal, delta, t);
  Image out(scene.ambient.height, scene.ambient.width);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double a = std::pow(scene.ambient.at(y, x, c), t.gamma);
        const double f = std::pow(scene.full.at(y, x, c), t.gamma);
        const double v = std::pow(a + g.at(c, y) * std::max(f - a, 0.0), 1.0 / t.gamma);
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace flicker::fixtures
