// SPDX-License-Identifier: Apache-2.0
#include "flicker/attack.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "flicker/error.hpp"
#include "flicker/parallel.hpp"
#include "flicker/rng.hpp"

namespace flicker {

namespace {
constexpr double kMinLeverage = 1e-6;
}

void AttackConfig::validate(int class_count) const {
  require(max_iterations >= 1, "invalid_config", "max_iterations must be >= 1");
  require(batch_size >= 1, "invalid_config", "batch_size must be >= 1");
  require(target_class >= 0 && target_class < class_count, "invalid_class",
          "target class " + std::to_string(target_class) + " outside [0, " +
              std::to_string(class_count) + ")");
  require(convergence_window >= 1, "invalid_config", "convergence window must be >= 1");
  require(adam.learning_rate > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 &&
              adam.beta2 < 1.0 && adam.epsilon > 0.0,
          "invalid_config", "invalid ADAM hyperparameters");
  transforms.validate();
}

BatchGradient eot_batch_gradient(const ScenePair& scene, const Classifier& classifier,
                                 const CameraTimings& timings, const ChannelMatrix& signal,
                                 const AttackConfig& config, int iteration) {
  const ShutterKernel kernel = build_shutter_kernel(timings);
  const int l = signal.length;
  const int batch = config.batch_size;
  std::vector<double> losses(batch, 0.0);
  std::vector<double> confidences(batch, 0.0);
  std::vector<ChannelMatrix> grads(batch);

  parallel_for(batch, config.workers, [&](int b) {
    Rng rng = make_rng(config.seed, streams::kAttackSample,
                       static_cast<std::uint64_t>(iteration) * batch + b);
    const TransformParams t = sample_transform(rng, config.transforms);
    const ColorError c = sample_color_error(rng, config.transforms);
    const int delta = uniform_int(rng, 0, l);  // l aliases 0

    const ScenePair view{apply_transform(scene.ambient, t, true), apply_transform(scene.full, t, false)};
    const RowGain gain = row_gain(signal, delta, kernel, timings.rows);
    const Image lit = compose(view, gain, timings.gamma);
    const Image seen = apply_color_error(lit, c);
    LossGradient lg = classifier.loss_and_input_gradient(seen, config.target_class);
    const Image d_lit = apply_color_error_backward(lit, c, lg.grad);
    const RowGain d_gain = compose_backward(view, gain, timings.gamma, d_lit);
    grads[b] = row_gain_adjoint(d_gain, delta, kernel, l);
    losses[b] = lg.loss;
    confidences[b] = lg.output.probabilities[config.target_class];
  });

  BatchGradient out;
  out.grad = ChannelMatrix(signal.channels, l);
  const double sign = config.untargeted ? -1.0 : 1.0;
  for (int b = 0; b < batch; ++b) {
    out.loss += losses[b];
    out.confidence += confidences[b];
    for (std::size_t i = 0; i < out.grad.data.size(); ++i) out.grad.data[i] += grads[b].data[i];
  }
  out.loss = sign * out.loss / batch;
  out.confidence /= batch;
  for (double& g : out.grad.data) g *= sign / batch;
  return out;
}

namespace {

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  return std::accumulate(v.begin() + begin, v.begin() + end, 0.0) / double(end - begin);
}

}  // namespace

AttackResult optimize_signal(const ScenePair& scene, const Classifier& classifier,
                             const CameraTimings& timings, const AttackConfig& config,
                             const ProgressFn& progress) {
  timings.validate();
  scene.validate(timings);
  config.validate(classifier.class_count());
  require(classifier.input_height() == timings.rows && classifier.input_width() == timings.cols,
          "shape_mismatch", "classifier input size differs from the camera frame");
  require(max_headroom(scene, timings.gamma) >= kMinLeverage, "no_signal_leverage",
          "no signal leverage: the fully lit image adds no light over the ambient image");

  const int l = signal_length(timings);
  Rng init = make_rng(config.seed, streams::kInit);
  OptimizerVariables vars(random_variables(LightSignal::kChannels, l, init), config.adam);

  AttackResult result{LightSignal(reparameterize(vars.v), timings), 0.0, 0, {}, {}, false};
  const std::size_t w = static_cast<std::size_t>(config.convergence_window);
  for (int n = 0; n < config.max_iterations; ++n) {
    const ChannelMatrix f = reparameterize(vars.v);
    const BatchGradient bg = eot_batch_gradient(scene, classifier, timings, f, config, n);
    require(std::isfinite(bg.loss), "non_finite", "attack loss became non-finite");
    const ChannelMatrix dv = reparameterize_backward(vars.v, bg.grad);
    vars.adam.step(vars.v.data, dv.data);

    result.loss_trace.push_back(bg.loss);
    result.confidence_trace.push_back(bg.confidence);
    if (progress) progress(n, bg.loss, bg.confidence);

    const std::size_t done = result.loss_trace.size();
    if (!config.untargeted && done >= w &&
        window_mean(result.confidence_trace, done - w, done) >= config.confidence_stop) {
      result.converged = true;
      break;
    }
    if (done >= 2 * w) {
      const double previous = window_mean(result.loss_trace, done - 2 * w, done - w);
      const double current = window_mean(result.loss_trace, done - w, done);
      if (previous - current < config.convergence_tolerance) {
        result.converged = true;
        break;
      }
    }
  }

  result.iterations_used = static_cast<int>(result.loss_trace.size());
  const std::size_t done = result.loss_trace.size();
  result.final_loss = window_mean(result.loss_trace, done - std::min(done, w), done);
  result.signal = LightSignal(reparameterize(vars.v), timings);
  return result;
}

// Affinity targeting ----------------------------------------------------------

namespace {

std::set<std::string> tokens(const std::string& label) {
  std::set<std::string> out;
  std::string current;
  for (char ch : label + " ") {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!current.empty()) {
      out.insert(current);
      current.clear();
    }
  }
  return out;
}

bool shares_token(const std::string& a, const std::string& b) {
  const auto ta = tokens(a);
  for (const auto& t : tokens(b)) {
    if (ta.count(t)) return true;
  }
  return false;
}

}  // namespace

std::vector<AffinityTarget> affinity_targets(const ScenePair& scene, const Classifier& classifier,
                                             const CameraTimings& timings,
                                             const AttackConfig& attack,
                                             const AffinityConfig& config) {
  const int k = classifier.class_count();
  require(config.source_class >= 0 && config.source_class < k, "invalid_class",
          "source class outside the classifier's range");
  require(config.warmup_iterations >= 1 && config.eval_samples >= 1 && config.top_k >= 1,
          "invalid_config", "affinity warmup, samples and top_k must be >= 1");

  AttackConfig warm = attack;
  warm.target_class = config.source_class;
  warm.untargeted = true;
  warm.max_iterations = config.warmup_iterations;
  const AttackResult warmup = optimize_signal(scene, classifier, timings, warm);

  const ShutterKernel kernel = build_shutter_kernel(timings);
  const ChannelMatrix& f = warmup.signal.values();
  std::vector<std::vector<double>> probs(config.eval_samples);
  parallel_for(config.eval_samples, attack.workers, [&](int s) {
    Rng rng = make_rng(attack.seed, streams::kAffinity, s);
    const TransformParams t = sample_transform(rng, attack.transforms);
    const ColorError c = sample_color_error(rng, attack.transforms);
    const int delta = uniform_int(rng, 0, f.length - 1);
    const ScenePair view{apply_transform(scene.ambient, t, true), apply_transform(scene.full, t, false)};
    const Image seen =
        apply_color_error(compose(view, row_gain(f, delta, kernel, timings.rows), timings.gamma), c);
    probs[s] = classifier.forward(seen).probabilities;
  });
  std::vector<double> mean(k, 0.0);
  for (const auto& p : probs)
    for (int i = 0; i < k; ++i) mean[i] += p[i] / config.eval_samples;

  const auto& labels = classifier.labels();
  const std::string& source_label = labels.at(config.source_class);
  std::set<int> excluded(config.excluded_classes.begin(), config.excluded_classes.end());
  std::vector<AffinityTarget> ranked;
  for (int i = 0; i < k; ++i) {
    if (i == config.source_class || excluded.count(i)) continue;
    if (config.token_filter && shares_token(labels.at(i), source_label)) continue;
    ranked.push_back({i, labels.at(i), mean[i]});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const AffinityTarget& a, const AffinityTarget& b) { return a.confidence > b.confidence; });
  if (static_cast<int>(ranked.size()) > config.top_k) ranked.resize(config.top_k);
  return ranked;
}

// Signal banks ----------------------------------------------------------------

std::vector<AmbientInterval> level_intervals(std::vector<double> levels) {
  std::vector<AmbientInterval> out(levels.size());
  std::vector<std::size_t> order(levels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return levels[a] < levels[b]; });
  for (std::size_t r = 0; r < order.size(); ++r) {
    const double v = levels[order[r]];
    double low = v;
    double high = v;
    if (r > 0) low = 0.5 * (levels[order[r - 1]] + v);
    if (r + 1 < order.size()) high = 0.5 * (v + levels[order[r + 1]]);
    if (r == 0 && order.size() > 1) low = v - (high - v);
    if (r + 1 == order.size() && order.size() > 1) high = v + (v - low);
    out[order[r]] = {low, high};
  }
  return out;
}

void SignalBank::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const BankEntry& e = entries[i];
    require(e.interval.low <= e.interval.high, "invalid_bank", "bank interval is inverted");
    if (e.signal) {
      require(std::abs(e.signal->timings().exposure_us - e.exposure_us) < 1e-9, "invalid_bank",
              "bank signal was built for a different exposure");
    }
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const BankEntry& o = entries[j];
      if (std::abs(o.exposure_us - e.exposure_us) >= 1e-9) continue;
      const bool overlap = std::min(e.interval.high, o.interval.high) > std::max(e.interval.low, o.interval.low);
      require(!overlap, "invalid_bank", "bank intervals overlap within one exposure");
    }
  }
}

SignalBank build_signal_bank(const AmbientSceneModel& scenes, const Classifier& classifier,
                             const std::vector<double>& ambient_levels,
                             const std::vector<double>& exposures_us,
                             const CameraTimings& base_timings, const AttackConfig& config,
                             const std::function<void(const BankEntry&)>& on_entry) {
  require(!ambient_levels.empty() && !exposures_us.empty(), "invalid_config",
          "signal bank needs at least one ambient level and one exposure");
  const std::vector<AmbientInterval> intervals = level_intervals(ambient_levels);
  SignalBank bank;
  int index = 0;
  for (double exposure : exposures_us) {
    for (std::size_t li = 0; li < ambient_levels.size(); ++li, ++index) {
      BankEntry entry;
      entry.interval = intervals[li];
      entry.level = ambient_levels[li];
      entry.exposure_us = exposure;
      try {
        CameraTimings timings = base_timings;
        timings.exposure_us = exposure;
        AttackConfig run = config;
        run.seed = index == 0 ? config.seed : make_rng(config.seed, streams::kBank, index)();
        const AttackResult r = optimize_signal(scenes.at(ambient_levels[li]), classifier, timings, run);
        entry.signal = r.signal;
        entry.final_loss = r.final_loss;
        entry.iterations_used = r.iterations_used;
      } catch (const Error& e) {
        entry.failure = e.code() + ": " + e.what();
      }
      if (on_entry) on_entry(entry);
      bank.entries.push_back(std::move(entry));
    }
  }
  const bool any = std::any_of(bank.entries.begin(), bank.entries.end(),
                               [](const BankEntry& e) { return e.signal.has_value(); });
  require(any, "bank_failed", "every signal-bank entry failed to optimize");
  return bank;
}

const LightSignal& select_signal(const SignalBank& bank, double ambient_level, double exposure_us) {
  const BankEntry* best = nullptr;
  bool best_contains = false;
  double best_distance = 0.0;
  bool any_exposure = false;
  for (const BankEntry& e : bank.entries) {
    if (std::abs(e.exposure_us - exposure_us) >= 1e-9) continue;
    any_exposure = true;
    if (!e.signal) continue;
    const bool contains = e.interval.contains(ambient_level);
    const double distance = std::abs(e.interval.midpoint() - ambient_level);
    bool better = false;
    if (!best) {
      better = true;
    } else if (contains != best_contains) {
      better = contains;
    } else if (contains) {
      better = e.interval.low < best->interval.low;
    } else if (distance != best_distance) {
      better = distance < best_distance;
    } else {
      better = e.interval.low < best->interval.low;
    }
    if (better) {
      best = &e;
      best_contains = contains;
      best_distance = distance;
    }
  }
  if (!best) {
    std::ostringstream msg;
    msg << (any_exposure ? "no usable bank entry" : "no bank entry") << " for exposure "
        << exposure_us << " us";
    throw Error("no_matching_exposure", msg.str());
  }
  return *best->signal;
}

}  // namespace flicker
