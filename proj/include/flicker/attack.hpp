// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flicker/camera.hpp"
#include "flicker/classifier.hpp"
#include "flicker/render.hpp"
#include "flicker/scene.hpp"
#include "flicker/transforms.hpp"

namespace flicker {

struct AttackConfig {
  int target_class = 0;
  int max_iterations = 5000;
  /// EoT samples averaged per step; 1 reproduces the single-sample loop.
  int batch_size = 8;
  AdamConfig adam{};
  /// Stop when the smoothed loss improves by less than `convergence_tolerance`
  /// between consecutive windows, or when the mean target confidence over the
  /// last window reaches `confidence_stop`.
  int convergence_window = 200;
  double convergence_tolerance = 1e-4;
  double confidence_stop = 0.9;
  TransformRanges transforms{};
  std::uint64_t seed = 0;
  /// Maximize the cross-entropy of `target_class` instead of minimizing it.
  bool untargeted = false;
  int workers = 1;

  void validate(int class_count) const;
};

struct AttackResult {
  LightSignal signal;
  double final_loss = 0.0;  // mean loss over the last window
  int iterations_used = 0;
  std::vector<double> loss_trace;
  std::vector<double> confidence_trace;  // mean target probability per step
  bool converged = false;
};

using ProgressFn = std::function<void(int iteration, double loss, double confidence)>;

/// EoT gradient optimization of the light signal (tanh-parameterized, ADAM).
/// Throws Error("no_signal_leverage") when the scene has no attacker-light
/// headroom and Error("non_finite") if the loss diverges.
AttackResult optimize_signal(const ScenePair& scene, const Classifier& classifier,
                             const CameraTimings& timings, const AttackConfig& config,
                             const ProgressFn& progress = {});

/// Mean EoT loss and its gradient w.r.t. the signal values for one batch.
/// Exposed for gradient checking.
struct BatchGradient {
  double loss = 0.0;
  double confidence = 0.0;
  ChannelMatrix grad;
};
BatchGradient eot_batch_gradient(const ScenePair& scene, const Classifier& classifier,
                                 const CameraTimings& timings, const ChannelMatrix& signal,
                                 const AttackConfig& config, int iteration);

struct AffinityConfig {
  int source_class = 0;
  int warmup_iterations = 1000;
  int eval_samples = 64;
  int top_k = 7;
  std::vector<int> excluded_classes;
  /// Also drop classes whose label shares a word with the source label.
  bool token_filter = true;
};

struct AffinityTarget {
  int class_index = 0;
  std::string label;
  double confidence = 0.0;
};

/// Untargeted warmup from the source class, then rank the remaining classes
/// by their mean confidence over an EoT sample of the warmed-up signal.
std::vector<AffinityTarget> affinity_targets(const ScenePair& scene, const Classifier& classifier,
                                             const CameraTimings& timings,
                                             const AttackConfig& attack,
                                             const AffinityConfig& config);

/// Closed interval of ambient fractions one bank entry is meant for.
struct AmbientInterval {
  double low = 0.0;
  double high = 0.0;
  double midpoint() const { return 0.5 * (low + high); }
  bool contains(double v) const { return v >= low && v <= high; }
};

struct BankEntry {
  AmbientInterval interval;
  double level = 0.0;
  double exposure_us = 0.0;
  std::optional<LightSignal> signal;  // empty when the optimization failed
  std::string failure;
  double final_loss = 0.0;
  int iterations_used = 0;
};

struct SignalBank {
  std::vector<BankEntry> entries;

  /// Intervals must not overlap (shared endpoints allowed) within one
  /// exposure, and each signal must match its exposure.
  void validate() const;
};

/// Intervals around sorted levels: interior bounds at midpoints, outer bounds
/// extended by half the neighbouring gap.
std::vector<AmbientInterval> level_intervals(std::vector<double> levels);

/// One optimize_signal run per (level, exposure). Failures are recorded per
/// entry; throws only if every entry failed.
SignalBank build_signal_bank(const AmbientSceneModel& scenes, const Classifier& classifier,
                             const std::vector<double>& ambient_levels,
                             const std::vector<double>& exposures_us,
                             const CameraTimings& base_timings, const AttackConfig& config,
                             const std::function<void(const BankEntry&)>& on_entry = {});

/// Entry with exactly matching exposure whose interval contains the level;
/// otherwise the nearest interval midpoint. Ties go to the lower interval.
const LightSignal& select_signal(const SignalBank& bank, double ambient_level, double exposure_us);

}  // namespace flicker
