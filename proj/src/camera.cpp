// SPDX-License-Identifier: Apache-2.0
#include "flicker/camera.hpp"

#include <cmath>
#include <string>

#include "flicker/error.hpp"

namespace flicker {

void CameraTimings::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid_timings", what); };
  if (!(readout_us > 0.0) || !std::isfinite(readout_us)) fail("readout_us must be > 0");
  if (!(exposure_us >= readout_us) || !std::isfinite(exposure_us))
    fail("exposure_us must be >= readout_us");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail("gamma must be > 0");
  if (rows < 1 || cols < 1) fail("rows and cols must be >= 1");
}

int exposure_slots(const CameraTimings& timings) {
  const double ratio = timings.exposure_us / timings.readout_us;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) < 1e-9) return static_cast<int>(nearest);
  return static_cast<int>(std::ceil(ratio));
}

int signal_length(const CameraTimings& timings) {
  return timings.rows + exposure_slots(timings);
}

ShutterKernel build_shutter_kernel(const CameraTimings& timings) {
  timings.validate();
  const int n = exposure_slots(timings);
  const double ratio = timings.exposure_us / timings.readout_us;
  ShutterKernel kernel;
  kernel.weights.assign(n, timings.readout_us / timings.exposure_us);
  const double partial = ratio - (n - 1);
  if (std::abs(partial - 1.0) > 1e-9) {
    kernel.weights.back() = partial * timings.readout_us / timings.exposure_us;
  } else {
    // Integral ratio: use the exact 1/n so the sum is 1 to the last bit.
    kernel.weights.assign(n, 1.0 / n);
  }
  return kernel;
}

LightSignal::LightSignal(ChannelMatrix values, CameraTimings timings)
    : values_(std::move(values)), timings_(timings) {
  timings_.validate();
  require(values_.channels == kChannels, "invalid_signal", "signal must have 3 channels");
  require(values_.length == signal_length(timings_), "invalid_signal",
          "signal length " + std::to_string(values_.length) + " != rows + ceil(t_e/t_r) = " +
              std::to_string(signal_length(timings_)));
  for (double v : values_.data) {
    require(v >= 0.0 && v <= 1.0, "invalid_signal", "signal values must lie in [0,1]");
  }
}

LightSignal LightSignal::constant(const CameraTimings& timings, double value) {
  return LightSignal(ChannelMatrix(kChannels, signal_length(timings), value), timings);
}

ChannelMatrix random_variables(int channels, int length, Rng& rng) {
  ChannelMatrix v(channels, length);
  for (double& x : v.data) x = uniform(rng, -1.0, 1.0);
  return v;
}

ChannelMatrix reparameterize(const ChannelMatrix& v) {
  ChannelMatrix f(v.channels, v.length);
  for (std::size_t i = 0; i < v.data.size(); ++i) f.data[i] = 0.5 * (std::tanh(v.data[i]) + 1.0);
  return f;
}

ChannelMatrix reparameterize_backward(const ChannelMatrix& v, const ChannelMatrix& upstream) {
  require(v.same_shape(upstream), "shape_mismatch",
          "reparameterize_backward: upstream shape differs from v");
  ChannelMatrix grad(v.channels, v.length);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const double t = std::tanh(v.data[i]);
    grad.data[i] = upstream.data[i] * 0.5 * (1.0 - t * t);
  }
  return grad;
}

}  // namespace flicker
