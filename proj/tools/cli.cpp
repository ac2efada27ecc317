// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <fmt/format.h>
#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flicker/attack.hpp"
#include "flicker/bridge.hpp"
#include "flicker/cnn.hpp"
#include "flicker/error.hpp"
#include "flicker/eval.hpp"
#include "flicker/io.hpp"
#include "flicker/pwmc.hpp"
#include "flicker/scene.hpp"
#include "flicker/training.hpp"

#ifndef FLICKER_VERSION
#define FLICKER_VERSION "0.0.0"
#endif
#ifndef FLICKER_DEFAULT_MODEL
#define FLICKER_DEFAULT_MODEL ""
#endif

namespace flicker::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("invalid_config", msg) {}
};

// Sections each subcommand accepts, besides the common top-level keys.
const std::map<std::string, std::set<std::string>> kSections = {
    {"synth-scene", {"synth"}},
    {"train-classifier", {"dataset", "training", "transforms"}},
    {"attack", {"classifier", "camera", "transforms", "scene", "attack"}},
    {"affinity", {"classifier", "camera", "transforms", "scene", "attack", "affinity"}},
    {"eval", {"classifier", "camera", "transforms", "scene", "eval"}},
    {"sweep-exposure", {"classifier", "camera", "transforms", "scene", "sweep"}},
    {"sweep-ambient", {"classifier", "camera", "transforms", "scene", "sweep"}},
    {"bank", {"classifier", "camera", "transforms", "scene", "attack", "bank"}},
    {"select", {"select"}},
    {"compile-pwm", {"pwm"}},
};

const std::set<std::string> kCommonKeys = {"seed", "out", "workers"};

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}.{} has the wrong type", where, key));
  }
}

template <typename T>
T get_req(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(fmt::format("{}.{} is required", where, key));
  return get_or<T>(obj, key, T{}, where);
}

std::string hash_bytes(const std::string& bytes) {
  unsigned char digest[crypto_generichash_BYTES];
  crypto_generichash(digest, sizeof digest, reinterpret_cast<const unsigned char*>(bytes.data()),
                     bytes.size(), nullptr, 0);
  std::string hex(sizeof digest * 2 + 1, '\0');
  sodium_bin2hex(hex.data(), hex.size(), digest, sizeof digest);
  hex.pop_back();
  return hex;
}

struct Context {
  std::string subcommand;
  json config = json::object();
  std::string config_text;
  fs::path config_dir = ".";
  fs::path out_dir;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string bridge_cmd;
  ojson inputs = ojson::array();
  ojson outputs = ojson::array();
  ojson results = ojson::object();

  const json& section(const std::string& name) const {
    static const json empty = json::object();
    return config.contains(name) ? config.at(name) : empty;
  }

  fs::path input_path(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : config_dir / path;
  }

  void record_input(const fs::path& path) {
    inputs.push_back({{"path", path.string()}, {"blake2b", hash_bytes(read_text_file(path))}});
  }

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }
};

CameraTimings parse_camera(const Context& ctx) {
  const json& c = ctx.section("camera");
  check_keys(c, {"readout_us", "exposure_us", "rows", "cols", "gamma"}, "camera");
  CameraTimings t;
  t.readout_us = get_or(c, "readout_us", t.readout_us, "camera");
  t.exposure_us = get_or(c, "exposure_us", t.exposure_us, "camera");
  t.rows = get_or(c, "rows", t.rows, "camera");
  t.cols = get_or(c, "cols", t.cols, "camera");
  t.gamma = get_or(c, "gamma", t.gamma, "camera");
  t.validate();
  return t;
}

Range parse_range(const json& obj, const std::string& key, Range fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto v = get_or<std::vector<double>>(obj, key, {}, where);
  if (v.size() != 2) throw ConfigError(fmt::format("{}.{} must be [low, high]", where, key));
  return {v[0], v[1]};
}

TransformRanges parse_transforms(const Context& ctx) {
  const json& c = ctx.section("transforms");
  if (c.is_string()) {
    if (c.get<std::string>() == "identity") return TransformRanges::identity();
    throw ConfigError("transforms must be an object or \"identity\"");
  }
  check_keys(c, {"rotation_deg", "flip_h", "flip_v", "translation", "scale", "lighting", "color_mult",
                 "color_add"},
             "transforms");
  TransformRanges r;
  r.rotation_deg = parse_range(c, "rotation_deg", r.rotation_deg, "transforms");
  r.flip_h = get_or(c, "flip_h", r.flip_h, "transforms");
  r.flip_v = get_or(c, "flip_v", r.flip_v, "transforms");
  r.translation_frac = parse_range(c, "translation", r.translation_frac, "transforms");
  r.scale = parse_range(c, "scale", r.scale, "transforms");
  r.lighting_mult = parse_range(c, "lighting", r.lighting_mult, "transforms");
  r.color_mult = parse_range(c, "color_mult", r.color_mult, "transforms");
  r.color_add = parse_range(c, "color_add", r.color_add, "transforms");
  r.validate();
  return r;
}

std::unique_ptr<Classifier> load_classifier(Context& ctx, int height, int width) {
  const json& c = ctx.section("classifier");
  check_keys(c, {"model", "bridge_cmd", "labels", "timeout_ms"}, "classifier");
  std::string bridge = ctx.bridge_cmd.empty() ? get_or<std::string>(c, "bridge_cmd", "", "classifier")
                                              : ctx.bridge_cmd;
  if (!bridge.empty()) {
    auto labels = get_or<std::vector<std::string>>(c, "labels", {}, "classifier");
    const int timeout = get_or(c, "timeout_ms", 30000, "classifier");
    ctx.results["classifier"] = {{"bridge_cmd", bridge}};
    return std::make_unique<BridgeClassifier>(bridge, height, width, std::move(labels), timeout);
  }
  fs::path model = c.contains("model") ? ctx.input_path(get_req<std::string>(c, "model", "classifier"))
                                       : fs::path(FLICKER_DEFAULT_MODEL);
  if (model.empty()) throw ConfigError("classifier.model is required");
  ctx.record_input(model);
  auto cnn = std::make_unique<CnnModel>(CnnModel::load(model));
  require(cnn->input_height() == height && cnn->input_width() == width, "shape_mismatch",
          fmt::format("classifier expects {}x{} images, camera renders {}x{}", cnn->input_height(),
                      cnn->input_width(), height, width));
  return cnn;
}

int resolve_class(const json& spec, const Classifier& classifier, const std::string& where) {
  if (spec.is_number_integer()) {
    const int k = spec.get<int>();
    require(k >= 0 && k < classifier.class_count(), "invalid_class",
            fmt::format("{} = {} outside 0..{}", where, k, classifier.class_count() - 1));
    return k;
  }
  if (spec.is_string()) {
    const auto& labels = classifier.labels();
    auto it = std::find(labels.begin(), labels.end(), spec.get<std::string>());
    require(it != labels.end(), "invalid_class",
            fmt::format("{} names unknown label '{}'", where, spec.get<std::string>()));
    return static_cast<int>(it - labels.begin());
  }
  throw ConfigError(where + " must be a class index or label");
}

ScenePair load_scene(Context& ctx, const CameraTimings& timings) {
  const json& s = ctx.section("scene");
  check_keys(s, {"ambient", "full"}, "scene");
  const fs::path amb = ctx.input_path(get_req<std::string>(s, "ambient", "scene"));
  const fs::path full = ctx.input_path(get_req<std::string>(s, "full", "scene"));
  ctx.record_input(amb);
  ctx.record_input(full);
  ScenePair pair{read_png(amb), read_png(full)};
  pair.validate(timings);
  return pair;
}

AmbientSceneModel load_ambient_model(Context& ctx, const CameraTimings& timings) {
  const json& s = ctx.section("scene");
  check_keys(s, {"ambient"}, "scene");
  const fs::path amb = ctx.input_path(get_req<std::string>(s, "ambient", "scene"));
  ctx.record_input(amb);
  AmbientSceneModel model{read_png(amb), timings.gamma};
  require(model.ambient.height == timings.rows && model.ambient.width == timings.cols,
          "shape_mismatch", "ambient image size differs from the camera rows/cols");
  return model;
}

AttackConfig parse_attack(const Context& ctx, const Classifier& classifier, bool need_target) {
  const json& a = ctx.section("attack");
  check_keys(a, {"target", "max_iterations", "batch_size", "learning_rate", "beta1", "beta2", "epsilon",
                 "convergence_window", "tolerance", "confidence_stop", "untargeted"},
             "attack");
  AttackConfig c;
  if (need_target) {
    if (!a.contains("target")) throw ConfigError("attack.target is required");
    c.target_class = resolve_class(a.at("target"), classifier, "attack.target");
  }
  c.max_iterations = get_or(a, "max_iterations", c.max_iterations, "attack");
  c.batch_size = get_or(a, "batch_size", c.batch_size, "attack");
  c.adam.learning_rate = get_or(a, "learning_rate", c.adam.learning_rate, "attack");
  c.adam.beta1 = get_or(a, "beta1", c.adam.beta1, "attack");
  c.adam.beta2 = get_or(a, "beta2", c.adam.beta2, "attack");
  c.adam.epsilon = get_or(a, "epsilon", c.adam.epsilon, "attack");
  c.convergence_window = get_or(a, "convergence_window", c.convergence_window, "attack");
  c.convergence_tolerance = get_or(a, "tolerance", c.convergence_tolerance, "attack");
  c.confidence_stop = get_or(a, "confidence_stop", c.confidence_stop, "attack");
  c.untargeted = get_or(a, "untargeted", c.untargeted, "attack");
  c.transforms = parse_transforms(ctx);
  c.seed = ctx.seed;
  c.workers = ctx.workers;
  c.validate(classifier.class_count());
  return c;
}

std::string loss_csv(const AttackResult& r) {
  std::string out = "iteration,loss,target_confidence\n";
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i) {
    out += fmt::format("{},{:.9g},{:.9g}\n", i, r.loss_trace[i], r.confidence_trace[i]);
  }
  return out;
}

// ---------------------------------------------------------------- commands

void cmd_synth_scene(Context& ctx) {
  const json& s = ctx.section("synth");
  check_keys(s, {"base_image", "ambient_mean", "full_mean"}, "synth");
  const fs::path base = ctx.input_path(get_req<std::string>(s, "base_image", "synth"));
  ctx.record_input(base);
  const double amb = get_or(s, "ambient_mean", kDefaultAmbientMean, "synth");
  const double full = get_or(s, "full_mean", kDefaultFullMean, "synth");
  const ScenePair pair = synth_scene(read_png(base), amb, full);
  fs::create_directories(ctx.out_dir);
  write_png(ctx.output("ambient.png"), pair.ambient);
  write_png(ctx.output("full.png"), pair.full);
  ctx.results["ambient_mean"] = mean_intensity(quantize8(pair.ambient));
  ctx.results["full_mean"] = mean_intensity(quantize8(pair.full));
}

void cmd_train(Context& ctx) {
  const json& d = ctx.section("dataset");
  check_keys(d, {"size", "train_count", "test_count", "seed"}, "dataset");
  ShapeDatasetSpec spec;
  spec.size = get_or(d, "size", spec.size, "dataset");
  spec.train_count = get_or(d, "train_count", spec.train_count, "dataset");
  spec.test_count = get_or(d, "test_count", spec.test_count, "dataset");
  spec.seed = get_or(d, "seed", spec.seed, "dataset");

  const json& t = ctx.section("training");
  check_keys(t, {"epochs", "batch_size", "learning_rate", "final_lr_fraction", "augment", "min_accuracy",
                 "label_permutation", "conv1_channels", "conv2_channels", "hidden", "pool1", "pool2"},
             "training");
  TrainingConfig cfg;
  cfg.epochs = get_or(t, "epochs", cfg.epochs, "training");
  cfg.batch_size = get_or(t, "batch_size", cfg.batch_size, "training");
  cfg.adam.learning_rate = get_or(t, "learning_rate", cfg.adam.learning_rate, "training");
  cfg.final_lr_fraction = get_or(t, "final_lr_fraction", cfg.final_lr_fraction, "training");
  cfg.augment = get_or(t, "augment", cfg.augment, "training");
  cfg.min_accuracy = get_or(t, "min_accuracy", cfg.min_accuracy, "training");
  cfg.label_permutation = get_or(t, "label_permutation", cfg.label_permutation, "training");
  cfg.augmentation = parse_transforms(ctx);
  CnnShape shape;
  shape.conv1_channels = get_or(t, "conv1_channels", shape.conv1_channels, "training");
  shape.conv2_channels = get_or(t, "conv2_channels", shape.conv2_channels, "training");
  shape.hidden = get_or(t, "hidden", shape.hidden, "training");
  shape.pool1 = get_or(t, "pool1", shape.pool1, "training");
  shape.pool2 = get_or(t, "pool2", shape.pool2, "training");

  const TrainingResult r = train_reference(spec, cfg, ctx.seed, shape, [](int epoch, double loss) {
    std::cerr << fmt::format("epoch {} loss {:.4f}\n", epoch, loss);
  });
  fs::create_directories(ctx.out_dir);
  r.model.save(ctx.output("model.json"));
  ctx.results["test_accuracy"] = r.test_accuracy;
  ctx.results["augmented_accuracy"] = r.augmented_accuracy;
  ctx.results["epoch_loss"] = r.epoch_loss;
}

void cmd_attack(Context& ctx) {
  const CameraTimings timings = parse_camera(ctx);
  auto classifier = load_classifier(ctx, timings.rows, timings.cols);
  const ScenePair scene = load_scene(ctx, timings);
  const AttackConfig cfg = parse_attack(ctx, *classifier, true);
  const AttackResult r = optimize_signal(scene, *classifier, timings, cfg);
  fs::create_directories(ctx.out_dir);
  save_signal(ctx.output("signal.json"), r.signal);
  write_text_file(ctx.output("loss.csv"), loss_csv(r));

  EvalOptions opts{cfg.transforms, ctx.workers};
  const auto per_offset =
      offset_losses(r.signal.values(), scene, *classifier, timings, cfg.target_class, 8, ctx.seed, opts);
  double mean = 0.0, var = 0.0;
  for (double v : per_offset) mean += v;
  mean /= static_cast<double>(per_offset.size());
  for (double v : per_offset) var += (v - mean) * (v - mean);
  var /= static_cast<double>(per_offset.size());
  ojson meta{{"target", cfg.target_class},
             {"target_label", classifier->labels().at(cfg.target_class)},
             {"untargeted", cfg.untargeted},
             {"final_loss", r.final_loss},
             {"iterations_used", r.iterations_used},
             {"converged", r.converged},
             {"signal_length", r.signal.length()},
             {"window_slots", exposure_slots(timings)},
             {"offset_loss_mean", mean},
             {"offset_loss_variance", var},
             {"offset_loss_max", *std::max_element(per_offset.begin(), per_offset.end())}};
  write_text_file(ctx.output("run.json"), meta.dump(2) + "\n");
  ctx.results = meta;
}

void cmd_affinity(Context& ctx) {
  const CameraTimings timings = parse_camera(ctx);
  auto classifier = load_classifier(ctx, timings.rows, timings.cols);
  const ScenePair scene = load_scene(ctx, timings);
  const AttackConfig attack = parse_attack(ctx, *classifier, false);
  const json& a = ctx.section("affinity");
  check_keys(a, {"source", "warmup_iterations", "eval_samples", "top_k", "exclude", "token_filter"},
             "affinity");
  AffinityConfig cfg;
  if (!a.contains("source")) throw ConfigError("affinity.source is required");
  cfg.source_class = resolve_class(a.at("source"), *classifier, "affinity.source");
  cfg.warmup_iterations = get_or(a, "warmup_iterations", cfg.warmup_iterations, "affinity");
  cfg.eval_samples = get_or(a, "eval_samples", cfg.eval_samples, "affinity");
  cfg.top_k = get_or(a, "top_k", cfg.top_k, "affinity");
  cfg.token_filter = get_or(a, "token_filter", cfg.token_filter, "affinity");
  if (a.contains("exclude")) {
    if (!a.at("exclude").is_array()) throw ConfigError("affinity.exclude must be a list");
    for (const json& e : a.at("exclude")) {
      cfg.excluded_classes.push_back(resolve_class(e, *classifier, "affinity.exclude"));
    }
  }
  const auto targets = affinity_targets(scene, *classifier, timings, attack, cfg);
  ojson list = ojson::array();
  for (const auto& t : targets) {
    list.push_back({{"class", t.class_index}, {"label", t.label}, {"confidence", t.confidence}});
  }
  fs::create_directories(ctx.out_dir);
  ojson doc{{"source", cfg.source_class}, {"targets", list}};
  write_text_file(ctx.output("affinity.json"), doc.dump(2) + "\n");
  ctx.results = doc;
}

void cmd_eval(Context& ctx) {
  const json& e = ctx.section("eval");
  check_keys(e, {"signal", "target", "n_transforms"}, "eval");
  CameraTimings timings = parse_camera(ctx);
  std::optional<LightSignal> signal;
  if (e.contains("signal")) {
    const fs::path p = ctx.input_path(get_req<std::string>(e, "signal", "eval"));
    ctx.record_input(p);
    signal = load_signal(p);
    // The camera section overrides the signal's timings when present.
    if (!ctx.config.contains("camera")) timings = signal->timings();
  }
  auto classifier = load_classifier(ctx, timings.rows, timings.cols);
  const ScenePair scene = load_scene(ctx, timings);
  if (!e.contains("target")) throw ConfigError("eval.target is required");
  const int target = resolve_class(e.at("target"), *classifier, "eval.target");
  const int n = get_or(e, "n_transforms", 200, "eval");
  const EvalOptions opts{parse_transforms(ctx), ctx.workers};
  const EvalReport report =
      signal ? evaluate(signal->values(), scene, *classifier, timings, target, n, ctx.seed, opts)
             : baseline_check(scene, *classifier, timings, target, n, ctx.seed, opts);
  fs::create_directories(ctx.out_dir);
  write_text_file(ctx.output("eval.csv"), report.to_csv());
  write_text_file(ctx.output("summary.json"), report.summary_json());
  ctx.results = json::parse(report.summary_json());
  ctx.results["baseline"] = !signal.has_value();
}

struct SweepCommon {
  int target = 0;
  int n_transforms = 200;
};

void write_curve(Context& ctx, const std::string& stem, const std::vector<CurvePoint>& curve,
                 const std::string& x_name, const std::string& title) {
  fs::create_directories(ctx.out_dir);
  write_text_file(ctx.output(stem + ".csv"), curve_csv(curve, x_name));
  write_text_file(ctx.output(stem + ".svg"), curve_svg(curve, title, x_name));
  ojson points = ojson::array();
  for (const CurvePoint& c : curve) {
    points.push_back({{x_name, c.x},
                      {"window_slots", c.window_slots},
                      {"signal_length", c.signal_length},
                      {"success_rate", c.success_rate},
                      {"mean_target_confidence", c.mean_target_confidence},
                      {"note", c.note}});
  }
  ctx.results["points"] = points;
}

void cmd_sweep_exposure(Context& ctx) {
  const json& s = ctx.section("sweep");
  check_keys(s, {"exposures_us", "signals", "bank", "level", "target", "n_transforms"}, "sweep");
  const CameraTimings base = parse_camera(ctx);
  auto classifier = load_classifier(ctx, base.rows, base.cols);
  const ScenePair scene = load_scene(ctx, base);
  if (!s.contains("target")) throw ConfigError("sweep.target is required");
  const int target = resolve_class(s.at("target"), *classifier, "sweep.target");
  const int n = get_or(s, "n_transforms", 200, "sweep");
  const auto exposures = get_req<std::vector<double>>(s, "exposures_us", "sweep");
  std::vector<LightSignal> signals;
  if (s.contains("bank")) {
    const fs::path p = ctx.input_path(get_req<std::string>(s, "bank", "sweep"));
    ctx.record_input(p);
    const SignalBank bank = load_bank(p);
    const double level = get_req<double>(s, "level", "sweep");
    for (double e : exposures) signals.push_back(select_signal(bank, level, e));
  } else {
    for (const auto& path : get_req<std::vector<std::string>>(s, "signals", "sweep")) {
      const fs::path p = ctx.input_path(path);
      ctx.record_input(p);
      signals.push_back(load_signal(p));
    }
  }
  const std::vector<SweepPoint> points = match_signals(exposures, signals);
  const EvalOptions opts{parse_transforms(ctx), ctx.workers};
  std::vector<CurvePoint> curve;
  for (const SweepPoint& p : points) {
    try {
      auto one = exposure_sweep(scene, *classifier, {p}, base, target, n, ctx.seed, opts);
      curve.push_back(one.front());
    } catch (const Error& err) {
      CurvePoint c;
      c.x = p.exposure_us;
      c.signal_length = p.signal.length;
      c.success_rate = std::nan("");
      c.note = std::string("failed: ") + err.what();
      curve.push_back(c);
    }
  }
  write_curve(ctx, "sweep_exposure", curve, "exposure_us", "success vs exposure");
}

void cmd_sweep_ambient(Context& ctx) {
  const json& s = ctx.section("sweep");
  check_keys(s, {"bank", "levels", "exposure_us", "target", "n_transforms"}, "sweep");
  const CameraTimings base = parse_camera(ctx);
  auto classifier = load_classifier(ctx, base.rows, base.cols);
  const AmbientSceneModel scenes = load_ambient_model(ctx, base);
  if (!s.contains("target")) throw ConfigError("sweep.target is required");
  const int target = resolve_class(s.at("target"), *classifier, "sweep.target");
  const int n = get_or(s, "n_transforms", 200, "sweep");
  const fs::path p = ctx.input_path(get_req<std::string>(s, "bank", "sweep"));
  ctx.record_input(p);
  const SignalBank bank = load_bank(p);
  const auto levels = get_req<std::vector<double>>(s, "levels", "sweep");
  const double exposure = get_or(s, "exposure_us", base.exposure_us, "sweep");
  const EvalOptions opts{parse_transforms(ctx), ctx.workers};
  std::vector<CurvePoint> curve;
  for (double level : levels) {
    try {
      auto one = ambient_sweep(scenes, *classifier, bank, {level}, exposure, base, target, n, ctx.seed, opts);
      curve.push_back(one.front());
    } catch (const Error& err) {
      CurvePoint c;
      c.x = level;
      c.success_rate = std::nan("");
      c.note = std::string("failed: ") + err.what();
      curve.push_back(c);
    }
  }
  write_curve(ctx, "sweep_ambient", curve, "ambient_fraction", "success vs ambient fraction");
}

void cmd_bank(Context& ctx) {
  const json& b = ctx.section("bank");
  check_keys(b, {"levels", "exposures_us"}, "bank");
  const CameraTimings base = parse_camera(ctx);
  auto classifier = load_classifier(ctx, base.rows, base.cols);
  const AmbientSceneModel scenes = load_ambient_model(ctx, base);
  const AttackConfig cfg = parse_attack(ctx, *classifier, true);
  const auto levels = get_req<std::vector<double>>(b, "levels", "bank");
  const auto exposures = get_or(b, "exposures_us", std::vector<double>{base.exposure_us}, "bank");
  const SignalBank bank = build_signal_bank(scenes, *classifier, levels, exposures, base, cfg,
                                            [](const BankEntry& e) {
                                              std::cerr << fmt::format(
                                                  "entry level {} exposure {} {}\n", e.level,
                                                  e.exposure_us, e.signal ? "ok" : e.failure);
                                            });
  fs::create_directories(ctx.out_dir);
  save_bank(ctx.output("bank.json"), bank);
  ojson entries = ojson::array();
  for (const BankEntry& e : bank.entries) {
    entries.push_back({{"level", e.level},
                       {"exposure_us", e.exposure_us},
                       {"ok", e.signal.has_value()},
                       {"failure", e.failure},
                       {"final_loss", e.final_loss}});
  }
  ctx.results["entries"] = entries;
}

void cmd_select(Context& ctx) {
  const json& s = ctx.section("select");
  check_keys(s, {"bank", "level", "exposure_us"}, "select");
  const fs::path p = ctx.input_path(get_req<std::string>(s, "bank", "select"));
  ctx.record_input(p);
  const SignalBank bank = load_bank(p);
  const double level = get_req<double>(s, "level", "select");
  const double exposure = get_req<double>(s, "exposure_us", "select");
  const LightSignal& signal = select_signal(bank, level, exposure);
  fs::create_directories(ctx.out_dir);
  save_signal(ctx.output("signal.json"), signal);
  ctx.results = {{"level", level}, {"exposure_us", exposure}};
}

void cmd_compile_pwm(Context& ctx) {
  const json& s = ctx.section("pwm");
  check_keys(s, {"signal", "slot_us", "grid_us"}, "pwm");
  const fs::path p = ctx.input_path(get_req<std::string>(s, "signal", "pwm"));
  ctx.record_input(p);
  const LightSignal signal = load_signal(p);
  const double slot = get_or(s, "slot_us", 120.0, "pwm");
  const double grid = get_or(s, "grid_us", 4.0, "pwm");
  const PwmSchedule schedule = compile(signal, slot, grid);
  const ChannelMatrix back = simulate(schedule);
  double worst = 0.0;
  for (std::size_t i = 0; i < back.data.size(); ++i) {
    worst = std::max(worst, std::abs(back.data[i] - signal.values().data[i]));
  }
  fs::create_directories(ctx.out_dir);
  write_text_file(ctx.output("schedule.json"), export_schedule_doc(schedule));
  write_text_file(ctx.output("schedule.h"), export_firmware(schedule));
  ctx.results = {{"slots", schedule.slots.size()},
                 {"period_us", schedule.period_us()},
                 {"max_roundtrip_error", worst},
                 {"roundtrip_bound", grid / (2.0 * slot) + 1.0 / slot}};
}

void write_manifest(const Context& ctx) {
  ojson m{{"tool", "flicker"},
          {"version", FLICKER_VERSION},
          {"subcommand", ctx.subcommand},
          {"seed", ctx.seed},
          {"workers", ctx.workers},
          {"config_blake2b", hash_bytes(ctx.config_text)},
          {"config", ctx.config},
          {"inputs", ctx.inputs},
          {"outputs", ctx.outputs},
          {"results", ctx.results}};
  write_text_file(ctx.out_dir / "manifest.json", m.dump(2) + "\n");
}

void write_error(const fs::path& dir, const std::string& code, const std::string& message) {
  try {
    ojson doc{{"error", code}, {"message", message}};
    write_text_file(dir / "error.json", doc.dump(2) + "\n");
  } catch (...) {
  }
}

}  // namespace

int run(int argc, char** argv) {
  if (sodium_init() < 0) {
    std::cerr << "error: libsodium failed to initialize\n";
    return 1;
  }
  CLI::App app{"flicker: rolling-shutter light signal toolkit"};
  app.set_version_flag("--version", FLICKER_VERSION);
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path, out_dir, bridge_cmd;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed overriding the configuration");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("--bridge-cmd", bridge_cmd, "external classifier command (bridge protocol)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth-scene", "scale a base PNG into an ambient/full scene pair"},
      {"train-classifier", "train the reference CNN on the procedural shapes"},
      {"attack", "optimize a light signal for a target class"},
      {"affinity", "rank reachable target classes after an untargeted warmup"},
      {"eval", "evaluate a signal (or steady light) over transforms and offsets"},
      {"sweep-exposure", "success rate across exposure times"},
      {"sweep-ambient", "success rate across ambient fractions"},
      {"bank", "build a signal bank over ambient levels and exposures"},
      {"select", "pick a bank signal for an ambient level and exposure"},
      {"compile-pwm", "compile a signal into a PWM schedule and firmware include"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  Context ctx;
  ctx.subcommand = app.get_subcommands().front()->get_name();
  try {
    if (!config_path.empty()) {
      ctx.config_text = read_text_file(config_path);
      try {
        ctx.config = json::parse(ctx.config_text);
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
      ctx.config_dir = fs::path(config_path).parent_path();
      if (ctx.config_dir.empty()) ctx.config_dir = ".";
    }
    if (!out_dir.empty()) {
      ctx.out_dir = out_dir;
    } else if (ctx.config.is_object() && ctx.config.contains("out") && ctx.config.at("out").is_string()) {
      ctx.out_dir = ctx.input_path(ctx.config.at("out").get<std::string>());
    } else {
      ctx.out_dir = "flicker-out";
    }
    std::set<std::string> allowed = kCommonKeys;
    for (const auto& s : kSections.at(ctx.subcommand)) allowed.insert(s);
    check_keys(ctx.config, allowed, "config (" + ctx.subcommand + ")");
    ctx.seed = seed ? *seed : get_or<std::uint64_t>(ctx.config, "seed", 1, "config");
    ctx.workers = workers ? *workers : get_or(ctx.config, "workers", 1, "config");
    if (ctx.workers < 1) throw ConfigError("workers must be >= 1");
    if (out_dir.empty()) get_or<std::string>(ctx.config, "out", "flicker-out", "config");
    ctx.bridge_cmd = bridge_cmd;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!ctx.out_dir.empty()) write_error(ctx.out_dir, e.code(), e.what());
    return 2;
  }

  const std::map<std::string, void (*)(Context&)> handlers = {
      {"synth-scene", cmd_synth_scene}, {"train-classifier", cmd_train},
      {"attack", cmd_attack},           {"affinity", cmd_affinity},
      {"eval", cmd_eval},               {"sweep-exposure", cmd_sweep_exposure},
      {"sweep-ambient", cmd_sweep_ambient}, {"bank", cmd_bank},
      {"select", cmd_select},           {"compile-pwm", cmd_compile_pwm},
  };
  try {
    handlers.at(ctx.subcommand)(ctx);
    write_manifest(ctx);
    std::cout << ctx.results.dump(2) << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    write_error(ctx.out_dir, e.code(), e.what());
    return e.code() == "invalid_config" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    write_error(ctx.out_dir, "internal", e.what());
    return 1;
  }
}

}  // namespace flicker::cli
