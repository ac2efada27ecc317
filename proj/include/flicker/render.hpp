// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flicker/camera.hpp"
#include "flicker/image.hpp"

namespace flicker {

/// Scene under ambient light only, and under ambient plus the attacker light
/// held fully on. The attacker-only component is extrapolated from their
/// gamma-linearized difference.
struct ScenePair {
  Image ambient;
  Image full;

  /// Throws when the two images differ in shape or do not match `timings`.
  void validate(const CameraTimings& timings) const;
  void validate() const;
};

/// Per-channel, per-row time average of the signal over the row's exposure
/// window (c x h).
using RowGain = ChannelMatrix;

/// out[ch][i] = in[ch][(i + delta) mod l], 0 <= delta <= l.
ChannelMatrix cyclic_shift(const ChannelMatrix& values, int delta);

/// Adjoint of cyclic_shift.
ChannelMatrix cyclic_shift_adjoint(const ChannelMatrix& values, int delta);

/// g[ch][y] = sum_j w[j] * f[ch][(y + delta + j) mod l] for y < rows.
/// When the signal was built for the same timings no index wraps; otherwise
/// the signal is treated as periodic with period l.
RowGain row_gain(const ChannelMatrix& signal, int delta, const ShutterKernel& kernel, int rows);

/// Transposed row_gain: scatters a c x rows gradient back onto c x l slots.
ChannelMatrix row_gain_adjoint(const RowGain& grad_gain, int delta, const ShutterKernel& kernel,
                               int length);

/// out = (amb^g + gain * max(full^g - amb^g, 0))^(1/g), clamped to [0,1].
/// Rows whose gain is exactly 0 reproduce the ambient image bitwise.
Image compose(const ScenePair& scene, const RowGain& gain, double gamma);

/// Gradient of a scalar loss w.r.t. the row gains given dL/d(out).
/// Clamped pixels contribute nothing.
RowGain compose_backward(const ScenePair& scene, const RowGain& gain, double gamma,
                         const Image& upstream);

/// Rolling-shutter image of `scene` lit by `signal` at phase offset delta,
/// with camera `timings` (which may differ from the ones the signal was built for).
Image render(const ScenePair& scene, const ChannelMatrix& signal, int delta,
             const CameraTimings& timings);
Image render(const ScenePair& scene, const LightSignal& signal, int delta);

/// Reverse-mode gradient of render w.r.t. the c x l signal values.
ChannelMatrix render_backward(const ScenePair& scene, const ChannelMatrix& signal, int delta,
                              const CameraTimings& timings, const Image& upstream);

/// Largest linearized attacker-light headroom max(full^g - amb^g) over the pair.
double max_headroom(const ScenePair& scene, double gamma);

}  // namespace flicker
