// SPDX-License-Identifier: Apache-2.0
#include "flicker/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flicker/error.hpp"

namespace flicker {

void ScenePair::validate() const {
  require(ambient.same_shape(full), "shape_mismatch",
          "scene pair: ambient and full images differ in size");
  require(ambient.height > 0 && ambient.width > 0, "shape_mismatch", "scene pair is empty");
}

void ScenePair::validate(const CameraTimings& timings) const {
  validate();
  require(ambient.height == timings.rows && ambient.width == timings.cols, "shape_mismatch",
          "scene is " + std::to_string(ambient.height) + "x" + std::to_string(ambient.width) +
              " but camera expects " + std::to_string(timings.rows) + "x" +
              std::to_string(timings.cols));
}

namespace {

int wrap(long long i, int n) {
  const long long r = i % n;
  return static_cast<int>(r < 0 ? r + n : r);
}

void check_delta(int delta, int length) {
  require(delta >= 0 && delta <= length, "invalid_offset",
          "offset " + std::to_string(delta) + " outside [0, " + std::to_string(length) + "]");
}

}  // namespace

ChannelMatrix cyclic_shift(const ChannelMatrix& values, int delta) {
  check_delta(delta, values.length);
  ChannelMatrix out(values.channels, values.length);
  for (int ch = 0; ch < values.channels; ++ch) {
    for (int i = 0; i < values.length; ++i) {
      out.at(ch, i) = values.at(ch, wrap(static_cast<long long>(i) + delta, values.length));
    }
  }
  return out;
}

ChannelMatrix cyclic_shift_adjoint(const ChannelMatrix& values, int delta) {
  check_delta(delta, values.length);
  ChannelMatrix out(values.channels, values.length);
  for (int ch = 0; ch < values.channels; ++ch) {
    for (int i = 0; i < values.length; ++i) {
      out.at(ch, wrap(static_cast<long long>(i) + delta, values.length)) = values.at(ch, i);
    }
  }
  return out;
}

RowGain row_gain(const ChannelMatrix& signal, int delta, const ShutterKernel& kernel, int rows) {
  require(signal.length > 0 && kernel.size() > 0 && rows > 0, "shape_mismatch",
          "row_gain: empty signal, kernel or image");
  check_delta(delta, signal.length);
  RowGain gain(signal.channels, rows);
  const int l = signal.length;
  for (int ch = 0; ch < signal.channels; ++ch) {
    for (int y = 0; y < rows; ++y) {
      double sum = 0.0;
      for (int j = 0; j < kernel.size(); ++j) {
        sum += kernel.weights[j] * signal.at(ch, wrap(static_cast<long long>(y) + delta + j, l));
      }
      gain.at(ch, y) = sum;
    }
  }
  return gain;
}

ChannelMatrix row_gain_adjoint(const RowGain& grad_gain, int delta, const ShutterKernel& kernel,
                               int length) {
  check_delta(delta, length);
  ChannelMatrix grad(grad_gain.channels, length);
  for (int ch = 0; ch < grad_gain.channels; ++ch) {
    for (int y = 0; y < grad_gain.length; ++y) {
      const double g = grad_gain.at(ch, y);
      if (g == 0.0) continue;
      for (int j = 0; j < kernel.size(); ++j) {
        grad.at(ch, wrap(static_cast<long long>(y) + delta + j, length)) += kernel.weights[j] * g;
      }
    }
  }
  return grad;
}

namespace {

void check_compose_shapes(const ScenePair& scene, const RowGain& gain, double gamma) {
  scene.validate();
  require(gain.channels == Image::kChannels && gain.length == scene.ambient.height,
          "shape_mismatch", "row gain rows do not match the image height");
  require(gamma > 0.0, "invalid_gamma", "gamma must be > 0");
}

}  // namespace

Image compose(const ScenePair& scene, const RowGain& gain, double gamma) {
  check_compose_shapes(scene, gain, gamma);
  const Image& amb = scene.ambient;
  const Image& full = scene.full;
  Image out(amb.height, amb.width);
  const double inv_gamma = 1.0 / gamma;
  for (int y = 0; y < amb.height; ++y) {
    for (int x = 0; x < amb.width; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        const double g = gain.at(c, y);
        const double a = amb.at(y, x, c);
        if (g == 0.0) {
          out.at(y, x, c) = std::clamp(a, 0.0, 1.0);
          continue;
        }
        const double a_lin = std::pow(a, gamma);
        const double headroom = std::max(std::pow(full.at(y, x, c), gamma) - a_lin, 0.0);
        out.at(y, x, c) = std::clamp(std::pow(a_lin + g * headroom, inv_gamma), 0.0, 1.0);
      }
    }
  }
  return out;
}

RowGain compose_backward(const ScenePair& scene, const RowGain& gain, double gamma,
                         const Image& upstream) {
  check_compose_shapes(scene, gain, gamma);
  require(upstream.same_shape(scene.ambient), "shape_mismatch",
          "compose_backward: upstream gradient shape differs from the scene");
  const Image& amb = scene.ambient;
  const Image& full = scene.full;
  const double inv_gamma = 1.0 / gamma;
  RowGain grad(gain.channels, gain.length);
  for (int y = 0; y < amb.height; ++y) {
    for (int c = 0; c < Image::kChannels; ++c) {
      const double g = gain.at(c, y);
      double acc = 0.0;
      for (int x = 0; x < amb.width; ++x) {
        const double up = upstream.at(y, x, c);
        if (up == 0.0) continue;
        const double a_lin = std::pow(amb.at(y, x, c), gamma);
        const double headroom = std::max(std::pow(full.at(y, x, c), gamma) - a_lin, 0.0);
        if (headroom == 0.0) continue;
        const double s = a_lin + g * headroom;
        if (s <= 1e-300) continue;
        const double value = std::pow(s, inv_gamma);
        if (value >= 1.0) continue;  // saturated
        acc += up * inv_gamma * value / s * headroom;
      }
      grad.at(c, y) = acc;
    }
  }
  return grad;
}

Image render(const ScenePair& scene, const ChannelMatrix& signal, int delta,
             const CameraTimings& timings) {
  timings.validate();
  scene.validate(timings);
  const ShutterKernel kernel = build_shutter_kernel(timings);
  return compose(scene, row_gain(signal, delta, kernel, timings.rows), timings.gamma);
}

Image render(const ScenePair& scene, const LightSignal& signal, int delta) {
  return render(scene, signal.values(), delta, signal.timings());
}

ChannelMatrix render_backward(const ScenePair& scene, const ChannelMatrix& signal, int delta,
                              const CameraTimings& timings, const Image& upstream) {
  timings.validate();
  scene.validate(timings);
  require(upstream.same_shape(scene.ambient), "shape_mismatch",
          "render_backward: upstream gradient must be h x w x 3");
  const ShutterKernel kernel = build_shutter_kernel(timings);
  const RowGain gain = row_gain(signal, delta, kernel, timings.rows);
  const RowGain grad_gain = compose_backward(scene, gain, timings.gamma, upstream);
  return row_gain_adjoint(grad_gain, delta, kernel, signal.length);
}

double max_headroom(const ScenePair& scene, double gamma) {
  scene.validate();
  double best = 0.0;
  for (std::size_t i = 0; i < scene.ambient.data.size(); ++i) {
    best = std::max(best, std::pow(scene.full.data[i], gamma) - std::pow(scene.ambient.data[i], gamma));
  }
  return best;
}

}  // namespace flicker
