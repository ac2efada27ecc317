// SPDX-License-Identifier: Apache-2.0
#include "flicker/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "flicker/error.hpp"
#include "flicker/parallel.hpp"
#include "flicker/rng.hpp"

namespace flicker {

EvalReport evaluate(const ChannelMatrix& signal, const ScenePair& scene, const Classifier& classifier,
                    const CameraTimings& timings, int target, int n_transforms, std::uint64_t seed,
                    const EvalOptions& options) {
  require(n_transforms >= 1, "invalid_config", "n_transforms must be >= 1");
  require(target >= 0 && target < classifier.class_count(), "invalid_class",
          "target class outside the classifier's range");
  require(signal.channels == LightSignal::kChannels && signal.length >= 1, "invalid_signal",
          "signal must have 3 channels and at least one slot");
  timings.validate();
  scene.validate(timings);
  options.transforms.validate();

  const ShutterKernel kernel = build_shutter_kernel(timings);
  const int l = signal.length;
  EvalReport report;
  report.target = target;
  report.n_transforms = n_transforms;
  report.n_offsets = l;
  report.total_images = n_transforms * l;
  report.seed = seed;
  report.rows.resize(static_cast<std::size_t>(report.total_images));

  const auto& labels = classifier.labels();
  parallel_for(n_transforms, options.workers, [&](int t) {
    Rng rng = make_rng(seed, streams::kEvalTransform, t);
    const TransformParams params = sample_transform(rng, options.transforms);
    const ColorError color = sample_color_error(rng, options.transforms);
    const ScenePair view{apply_transform(scene.ambient, params, true),
                         apply_transform(scene.full, params, false)};
    for (int delta = 0; delta < l; ++delta) {
      const Image seen = apply_color_error(
          compose(view, row_gain(signal, delta, kernel, timings.rows), timings.gamma), color);
      const ClassifierOutput out = classifier.forward(seen);
      EvalRow& row = report.rows[static_cast<std::size_t>(t) * l + delta];
      row.transform_id = t;
      row.offset = delta;
      row.predicted_class = out.argmax();
      row.predicted_label = labels.at(row.predicted_class);
      row.target_confidence = out.probabilities[target];
      row.success = out.strictly_predicts(target);
    }
  });

  double confidence = 0.0;
  for (const EvalRow& row : report.rows) {
    if (!row.success) continue;
    ++report.successes;
    confidence += row.target_confidence;
  }
  report.success_rate = double(report.successes) / double(report.total_images);
  report.mean_target_confidence = report.successes > 0 ? confidence / report.successes : 0.0;
  return report;
}

EvalReport evaluate(const LightSignal& signal, const ScenePair& scene, const Classifier& classifier,
                    int target, int n_transforms, std::uint64_t seed, const EvalOptions& options) {
  return evaluate(signal.values(), scene, classifier, signal.timings(), target, n_transforms, seed,
                  options);
}

std::vector<double> offset_losses(const ChannelMatrix& signal, const ScenePair& scene,
                                  const Classifier& classifier, const CameraTimings& timings,
                                  int target, int n_transforms, std::uint64_t seed,
                                  const EvalOptions& options) {
  require(n_transforms >= 1, "invalid_config", "n_transforms must be >= 1");
  require(target >= 0 && target < classifier.class_count(), "invalid_class",
          "target class outside the classifier's range");
  timings.validate();
  scene.validate(timings);
  const ShutterKernel kernel = build_shutter_kernel(timings);
  const int l = signal.length;
  std::vector<double> table(static_cast<std::size_t>(n_transforms) * l);
  parallel_for(n_transforms, options.workers, [&](int t) {
    Rng rng = make_rng(seed, streams::kEvalTransform, t);
    const TransformParams params = sample_transform(rng, options.transforms);
    const ColorError color = sample_color_error(rng, options.transforms);
    const ScenePair view{apply_transform(scene.ambient, params, true),
                         apply_transform(scene.full, params, false)};
    for (int delta = 0; delta < l; ++delta) {
      const Image seen = apply_color_error(
          compose(view, row_gain(signal, delta, kernel, timings.rows), timings.gamma), color);
      const ClassifierOutput out = classifier.forward(seen);
      table[static_cast<std::size_t>(t) * l + delta] = -std::log(std::max(out.probabilities[target], 1e-300));
    }
  });
  std::vector<double> mean(static_cast<std::size_t>(l), 0.0);
  for (int t = 0; t < n_transforms; ++t) {
    for (int d = 0; d < l; ++d) mean[d] += table[static_cast<std::size_t>(t) * l + d];
  }
  for (double& m : mean) m /= n_transforms;
  return mean;
}

EvalReport baseline_check(const ScenePair& scene, const Classifier& classifier,
                          const CameraTimings& timings, int source_class, int n_transforms,
                          std::uint64_t seed, const EvalOptions& options) {
  const LightSignal steady = LightSignal::constant(timings, 1.0);
  return evaluate(steady.values(), scene, classifier, timings, source_class, n_transforms, seed,
                  options);
}

std::string EvalReport::to_csv() const {
  std::string out = "transform_id,offset,predicted_class,predicted_label,target_confidence,success\n";
  for (const EvalRow& r : rows) {
    out += fmt::format("{},{},{},{},{:.6f},{}\n", r.transform_id, r.offset, r.predicted_class,
                       r.predicted_label, r.target_confidence, r.success ? 1 : 0);
  }
  return out;
}

std::string EvalReport::summary_json() const {
  nlohmann::ordered_json doc{{"format", "flicker-eval-summary"},
                             {"version", 1},
                             {"target", target},
                             {"n_transforms", n_transforms},
                             {"n_offsets", n_offsets},
                             {"total_images", total_images},
                             {"successes", successes},
                             {"success_rate", success_rate},
                             {"mean_target_confidence", mean_target_confidence},
                             {"seed", seed}};
  return doc.dump(2) + "\n";
}

std::vector<SweepPoint> match_signals(const std::vector<double>& exposures_us,
                                      const std::vector<LightSignal>& signals) {
  std::vector<SweepPoint> points;
  for (double e : exposures_us) {
    auto it = std::find_if(signals.begin(), signals.end(), [&](const LightSignal& s) {
      return std::abs(s.timings().exposure_us - e) < 1e-9;
    });
    require(it != signals.end(), "missing_signal",
            fmt::format("no signal provided for exposure {} us", e));
    points.push_back({e, it->values()});
  }
  return points;
}

std::vector<CurvePoint> exposure_sweep(const ScenePair& scene, const Classifier& classifier,
                                       const std::vector<SweepPoint>& points,
                                       const CameraTimings& base_timings, int target,
                                       int n_transforms, std::uint64_t seed,
                                       const EvalOptions& options) {
  require(!points.empty(), "invalid_config", "exposure sweep needs at least one exposure");
  std::vector<CurvePoint> curve;
  for (const SweepPoint& p : points) {
    CameraTimings timings = base_timings;
    timings.exposure_us = p.exposure_us;
    const EvalReport r = evaluate(p.signal, scene, classifier, timings, target, n_transforms, seed, options);
    CurvePoint c;
    c.x = p.exposure_us;
    c.window_slots = exposure_slots(timings);
    c.signal_length = p.signal.length;
    c.success_rate = r.success_rate;
    c.mean_target_confidence = r.mean_target_confidence;
    if (c.window_slots >= c.signal_length) c.note = "window covers the signal period";
    curve.push_back(c);
  }
  return curve;
}

std::vector<CurvePoint> ambient_sweep(const AmbientSceneModel& scenes, const Classifier& classifier,
                                      const SignalBank& bank, const std::vector<double>& levels,
                                      double exposure_us, const CameraTimings& base_timings,
                                      int target, int n_transforms, std::uint64_t seed,
                                      const EvalOptions& options) {
  require(!levels.empty(), "invalid_config", "ambient sweep needs at least one level");
  CameraTimings timings = base_timings;
  timings.exposure_us = exposure_us;
  std::vector<CurvePoint> curve;
  for (double level : levels) {
    const LightSignal& signal = select_signal(bank, level, exposure_us);
    const EvalReport r =
        evaluate(signal.values(), scenes.at(level), classifier, timings, target, n_transforms, seed, options);
    CurvePoint c;
    c.x = level;
    c.window_slots = exposure_slots(timings);
    c.signal_length = signal.length();
    c.success_rate = r.success_rate;
    c.mean_target_confidence = r.mean_target_confidence;
    curve.push_back(c);
  }
  return curve;
}

std::string curve_csv(const std::vector<CurvePoint>& curve, const std::string& x_name) {
  std::string out = x_name + ",window_slots,signal_length,success_rate,mean_target_confidence,note\n";
  for (const CurvePoint& c : curve) {
    out += fmt::format("{:.6g},{},{},{:.6f},{:.6f},{}\n", c.x, c.window_slots, c.signal_length,
                       c.success_rate, c.mean_target_confidence, c.note);
  }
  return out;
}

std::string curve_svg(const std::vector<CurvePoint>& curve, const std::string& title,
                      const std::string& x_label) {
  constexpr double kW = 480, kH = 320, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  double lo = curve.empty() ? 0.0 : curve.front().x;
  double hi = lo;
  for (const CurvePoint& c : curve) {
    lo = std::min(lo, c.x);
    hi = std::max(hi, c.x);
  }
  if (hi == lo) hi = lo + 1.0;
  auto px = [&](double x) { return kLeft + (x - lo) / (hi - lo) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kTop + (1.0 - y) * (kH - kTop - kBottom); };
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n"
      "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n"
      "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n"
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n"
      "<text x=\"8\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">success</text>\n",
      kW, kH, kLeft, title, kLeft, py(0), kW - kRight, py(0), kLeft, py(0), kLeft, py(1),
      kW / 2 - 40, kH - 12, x_label, py(0.5));
  std::string points;
  for (const CurvePoint& c : curve) {
    points += fmt::format("{:.1f},{:.1f} ", px(c.x), py(c.success_rate));
    svg += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"steelblue\"/>\n", px(c.x),
                       py(c.success_rate));
  }
  svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\"/>\n</svg>\n", points);
  return svg;
}

}  // namespace flicker
