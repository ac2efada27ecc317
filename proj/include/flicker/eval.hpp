// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flicker/attack.hpp"
#include "flicker/camera.hpp"
#include "flicker/classifier.hpp"
#include "flicker/render.hpp"
#include "flicker/transforms.hpp"

namespace flicker {

struct EvalRow {
  int transform_id = 0;
  int offset = 0;
  int predicted_class = 0;
  std::string predicted_label;
  double target_confidence = 0.0;
  bool success = false;
};

struct EvalReport {
  int target = 0;
  int n_transforms = 0;
  int n_offsets = 0;
  int total_images = 0;
  int successes = 0;
  double success_rate = 0.0;
  /// Mean target probability over successful images only (0 when none).
  double mean_target_confidence = 0.0;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;

  std::string to_csv() const;
  std::string summary_json() const;
};

struct EvalOptions {
  TransformRanges transforms{};
  int workers = 1;
};

/// Renders every (sampled transform, offset 0..l-1) pair, classifies it and
/// records whether the strict argmax is `target`. `timings` is the camera the
/// images are taken with; the signal is treated as periodic in its own length.
EvalReport evaluate(const ChannelMatrix& signal, const ScenePair& scene, const Classifier& classifier,
                    const CameraTimings& timings, int target, int n_transforms, std::uint64_t seed,
                    const EvalOptions& options = {});
EvalReport evaluate(const LightSignal& signal, const ScenePair& scene, const Classifier& classifier,
                    int target, int n_transforms, std::uint64_t seed, const EvalOptions& options = {});

/// Steady full illumination (signal of ones) scored against the source class.
EvalReport baseline_check(const ScenePair& scene, const Classifier& classifier,
                          const CameraTimings& timings, int source_class, int n_transforms,
                          std::uint64_t seed, const EvalOptions& options = {});

/// Mean cross-entropy of `target` per offset 0..l-1 over the same sampled
/// transforms evaluate() uses.
std::vector<double> offset_losses(const ChannelMatrix& signal, const ScenePair& scene,
                                  const Classifier& classifier, const CameraTimings& timings,
                                  int target, int n_transforms, std::uint64_t seed,
                                  const EvalOptions& options = {});

struct SweepPoint {
  double exposure_us = 0.0;
  ChannelMatrix signal;
};

struct CurvePoint {
  double x = 0.0;            // exposure in us, or ambient fraction
  int window_slots = 0;
  int signal_length = 0;
  double success_rate = 0.0;
  double mean_target_confidence = 0.0;
  std::string note;
};

/// One evaluate() per exposure with that exposure's signal.
std::vector<CurvePoint> exposure_sweep(const ScenePair& scene, const Classifier& classifier,
                                       const std::vector<SweepPoint>& points,
                                       const CameraTimings& base_timings, int target,
                                       int n_transforms, std::uint64_t seed,
                                       const EvalOptions& options = {});

/// Looks up the signal for each exposure in `signals` (matching the exposure
/// they were built for) and throws Error("missing_signal") naming any gap.
std::vector<SweepPoint> match_signals(const std::vector<double>& exposures_us,
                                      const std::vector<LightSignal>& signals);

/// For each ambient fraction: synthesize the pair, select the bank signal
/// for (level, exposure), evaluate.
std::vector<CurvePoint> ambient_sweep(const AmbientSceneModel& scenes, const Classifier& classifier,
                                      const SignalBank& bank, const std::vector<double>& levels,
                                      double exposure_us, const CameraTimings& base_timings,
                                      int target, int n_transforms, std::uint64_t seed,
                                      const EvalOptions& options = {});

std::string curve_csv(const std::vector<CurvePoint>& curve, const std::string& x_name);

/// Minimal SVG line chart of success rate against x.
std::string curve_svg(const std::vector<CurvePoint>& curve, const std::string& title,
                      const std::string& x_label);

}  // namespace flicker
