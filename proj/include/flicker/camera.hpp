// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "flicker/adam.hpp"
#include "flicker/rng.hpp"

namespace flicker {

/// Dense channels x length matrix of reals; row-major per channel.
struct ChannelMatrix {
  int channels = 0;
  int length = 0;
  std::vector<double> data;

  ChannelMatrix() = default;
  ChannelMatrix(int c, int n, double fill = 0.0)
      : channels(c), length(n), data(static_cast<std::size_t>(c) * n, fill) {}

  double& at(int ch, int i) { return data[static_cast<std::size_t>(ch) * length + i]; }
  double at(int ch, int i) const { return data[static_cast<std::size_t>(ch) * length + i]; }
  bool same_shape(const ChannelMatrix& o) const {
    return channels == o.channels && length == o.length;
  }
  bool operator==(const ChannelMatrix&) const = default;
};

/// Row timing of a rolling-shutter camera at model-input resolution.
/// `readout_us` is the effective per-row readout time after any downsampling.
struct CameraTimings {
  double readout_us = 120.0;
  double exposure_us = 500.0;
  int rows = 64;
  int cols = 64;
  double gamma = 2.2;

  /// Throws flicker::Error("invalid_timings") when an invariant is violated.
  void validate() const;
  bool operator==(const CameraTimings&) const = default;
};

/// Number of readout slots one row integrates over: ceil(t_e / t_r).
/// Ratios within 1e-9 of an integer are treated as that integer.
int exposure_slots(const CameraTimings& timings);

/// Period of the attacker signal in slots: rows + ceil(t_e / t_r).
int signal_length(const CameraTimings& timings);

/// Box filter of one row's exposure window, in slot units.
/// Full slots weigh t_r/t_e; a trailing partial slot weighs its covered fraction.
struct ShutterKernel {
  std::vector<double> weights;

  int size() const { return static_cast<int>(weights.size()); }
};

ShutterKernel build_shutter_kernel(const CameraTimings& timings);

/// Periodic attacker waveform, one value per readout slot and color channel.
class LightSignal {
 public:
  static constexpr int kChannels = 3;

  /// Validates length == signal_length(timings) and values in [0,1].
  LightSignal(ChannelMatrix values, CameraTimings timings);

  static LightSignal constant(const CameraTimings& timings, double value);

  const ChannelMatrix& values() const { return values_; }
  const CameraTimings& timings() const { return timings_; }
  int length() const { return values_.length; }
  int channels() const { return values_.channels; }

 private:
  ChannelMatrix values_;
  CameraTimings timings_;
};

/// Unbounded optimizer state: v plus its ADAM moments.
struct OptimizerVariables {
  ChannelMatrix v;
  Adam adam;

  OptimizerVariables(ChannelMatrix initial, const AdamConfig& config)
      : v(std::move(initial)), adam(v.data.size(), config) {}
};

/// v drawn i.i.d. uniform in [-1, 1].
ChannelMatrix random_variables(int channels, int length, Rng& rng);

/// f = (tanh(v) + 1) / 2, element-wise.
ChannelMatrix reparameterize(const ChannelMatrix& v);

/// upstream * (1 - tanh^2(v)) / 2, element-wise.
ChannelMatrix reparameterize_backward(const ChannelMatrix& v, const ChannelMatrix& upstream);

}  // namespace flicker
