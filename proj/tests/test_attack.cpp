// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "common.hpp"
#include "flicker/attack.hpp"
#include "flicker/cnn.hpp"
#include "flicker/error.hpp"

using namespace flicker;

namespace {

CameraTimings tiny_timings() {
  CameraTimings t;
  t.rows = t.cols = 8;
  t.exposure_us = 300;
  return t;
}

CnnModel tiny_model(std::uint64_t seed) {
  CnnShape s;
  s.height = s.width = 8;
  s.conv1_channels = 4;
  s.pool1 = s.pool2 = 2;
  s.conv2_channels = 4;
  s.hidden = 8;
  std::vector<std::string> labels = {"red fish", "blue fish", "cup", "dog"};
  s.classes = 4;
  Rng rng = make_rng(seed, streams::kInit);
  return CnnModel::reference(s, labels, rng);
}

AttackConfig quick_config(int target) {
  AttackConfig c;
  c.target_class = target;
  c.max_iterations = 30;
  c.batch_size = 2;
  c.convergence_window = 10;
  c.seed = 9;
  return c;
}

}  // namespace

TEST(AttackConfig, Validation) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate(10));
  c.target_class = 10;
  EXPECT_THROW(c.validate(10), Error);
  c = AttackConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(10), Error);
  c = AttackConfig{};
  c.adam.learning_rate = 0;
  EXPECT_THROW(c.validate(10), Error);
}

TEST(EotBatchGradient, MatchesFiniteDifferences) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(1);
  Rng rng = make_rng(71);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  const ChannelMatrix f = fixtures::random_signal(signal_length(t), rng);
  AttackConfig c = quick_config(2);
  c.batch_size = 3;
  const BatchGradient bg = eot_batch_gradient(s, m, t, f, c, 4);
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    ChannelMatrix p = f, q = f;
    p.data[i] = std::min(1.0, f.data[i] + h);
    q.data[i] = std::max(0.0, f.data[i] - h);
    const double fd = (eot_batch_gradient(s, m, t, p, c, 4).loss -
                       eot_batch_gradient(s, m, t, q, c, 4).loss) / (p.data[i] - q.data[i]);
    if (std::abs(fd) < 1e-7 && std::abs(bg.grad.data[i]) < 1e-7) continue;
    EXPECT_LT(fixtures::rel_error(bg.grad.data[i], fd, 1e-6), 1e-3) << i;
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(EotBatchGradient, UntargetedNegatesLossAndGradient) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(2);
  Rng rng = make_rng(72);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  const ChannelMatrix f = fixtures::random_signal(signal_length(t), rng);
  AttackConfig c = quick_config(1);
  const BatchGradient a = eot_batch_gradient(s, m, t, f, c, 0);
  c.untargeted = true;
  const BatchGradient b = eot_batch_gradient(s, m, t, f, c, 0);
  EXPECT_EQ(a.loss, -b.loss);
  for (std::size_t i = 0; i < a.grad.data.size(); ++i) EXPECT_EQ(a.grad.data[i], -b.grad.data[i]);
}

TEST(EotBatchGradient, IndependentOfWorkerCount) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(3);
  Rng rng = make_rng(73);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  const ChannelMatrix f = fixtures::random_signal(signal_length(t), rng);
  AttackConfig c = quick_config(0);
  c.batch_size = 5;
  const BatchGradient a = eot_batch_gradient(s, m, t, f, c, 2);
  c.workers = 3;
  const BatchGradient b = eot_batch_gradient(s, m, t, f, c, 2);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(OptimizeSignal, DeterministicAndValid) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(4);
  Rng rng = make_rng(74);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  const AttackResult a = optimize_signal(s, m, t, quick_config(3));
  const AttackResult b = optimize_signal(s, m, t, quick_config(3));
  EXPECT_EQ(a.signal.values(), b.signal.values());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.signal.length(), signal_length(t));
  for (double v : a.signal.values().data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(OptimizeSignal, OneIterationTrace) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(5);
  Rng rng = make_rng(75);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  AttackConfig c = quick_config(1);
  c.max_iterations = 1;
  const AttackResult r = optimize_signal(s, m, t, c);
  EXPECT_EQ(r.iterations_used, 1);
  EXPECT_EQ(r.loss_trace.size(), 1u);
  EXPECT_EQ(r.final_loss, r.loss_trace[0]);
}

TEST(OptimizeSignal, LossDecreasesOnEasyProblem) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(6);
  Rng rng = make_rng(76);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  AttackConfig c = quick_config(2);
  c.max_iterations = 200;
  c.convergence_window = 50;
  c.transforms = TransformRanges::identity();
  const AttackResult r = optimize_signal(s, m, t, c);
  const double first = std::accumulate(r.loss_trace.begin(), r.loss_trace.begin() + 20, 0.0);
  const double last = std::accumulate(r.loss_trace.end() - 20, r.loss_trace.end(), 0.0);
  EXPECT_LT(last, first);
}

TEST(OptimizeSignal, RejectsSceneWithoutHeadroom) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(7);
  Rng rng = make_rng(77);
  const Image amb = fixtures::random_image(8, 8, rng);
  try {
    optimize_signal({amb, amb}, m, t, quick_config(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "no_signal_leverage");
  }
}

TEST(OptimizeSignal, RejectsMismatchedShapes) {
  CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(8);
  Rng rng = make_rng(78);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  t.rows = 9;
  EXPECT_THROW(optimize_signal(s, m, t, quick_config(0)), Error);
}

TEST(Affinity, FiltersSourceExclusionsAndSharedTokens) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(9);
  Rng rng = make_rng(79);
  const ScenePair s = fixtures::random_scene(8, 8, rng);
  AffinityConfig a;
  a.source_class = 0;  // "red fish"
  a.warmup_iterations = 5;
  a.eval_samples = 4;
  a.top_k = 7;
  auto ranked = affinity_targets(s, m, t, quick_config(0), a);
  ASSERT_EQ(ranked.size(), 2u);  // "blue fish" shares "fish"
  for (const auto& r : ranked) {
    EXPECT_NE(r.class_index, 0);
    EXPECT_NE(r.class_index, 1);
  }
  EXPECT_GE(ranked[0].confidence, ranked[1].confidence);
  a.excluded_classes = {2};
  ranked = affinity_targets(s, m, t, quick_config(0), a);
  ASSERT_EQ(ranked.size(), 1u);
  EXPECT_EQ(ranked[0].label, "dog");
  a.excluded_classes.clear();
  a.token_filter = false;
  a.top_k = 2;
  EXPECT_EQ(affinity_targets(s, m, t, quick_config(0), a).size(), 2u);
}

TEST(LevelIntervals, MidpointsAndOuterExtension) {
  const auto iv = level_intervals({0.2, 0.5, 0.6});
  ASSERT_EQ(iv.size(), 3u);
  EXPECT_NEAR(iv[0].low, 0.05, 1e-15);
  EXPECT_DOUBLE_EQ(iv[0].high, 0.35);
  EXPECT_DOUBLE_EQ(iv[1].low, 0.35);
  EXPECT_DOUBLE_EQ(iv[1].high, 0.55);
  EXPECT_DOUBLE_EQ(iv[2].low, 0.55);
  EXPECT_NEAR(iv[2].high, 0.65, 1e-15);
}

namespace {

SignalBank toy_bank() {
  CameraTimings t = tiny_timings();
  SignalBank bank;
  const auto iv = level_intervals({0.2, 0.4});
  for (int i = 0; i < 2; ++i) {
    BankEntry e;
    e.interval = iv[i];
    e.level = i == 0 ? 0.2 : 0.4;
    e.exposure_us = t.exposure_us;
    e.signal = LightSignal::constant(t, 0.25 * (i + 1));
    bank.entries.push_back(e);
  }
  return bank;
}

}  // namespace

TEST(SelectSignal, ContainmentBoundaryAndNearest) {
  const SignalBank bank = toy_bank();
  EXPECT_NO_THROW(bank.validate());
  const double e = tiny_timings().exposure_us;
  EXPECT_EQ(select_signal(bank, 0.21, e).values().data[0], 0.25);
  EXPECT_EQ(select_signal(bank, 0.45, e).values().data[0], 0.5);
  EXPECT_EQ(select_signal(bank, 0.3, e).values().data[0], 0.25);   // shared boundary: lower
  EXPECT_EQ(select_signal(bank, 0.99, e).values().data[0], 0.5);   // outside: nearest midpoint
  EXPECT_EQ(select_signal(bank, 0.0, e).values().data[0], 0.25);
  try {
    select_signal(bank, 0.3, 1000.0);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), "no_matching_exposure");
  }
}

TEST(SignalBank, RejectsOverlapAndMismatchedExposure) {
  SignalBank bank = toy_bank();
  bank.entries[1].interval.low = 0.25;
  EXPECT_THROW(bank.validate(), Error);
  bank = toy_bank();
  bank.entries[1].exposure_us = 999.0;
  EXPECT_THROW(bank.validate(), Error);
}

TEST(SignalBank, BuildRecordsPerEntryFailures) {
  const CameraTimings t = tiny_timings();
  const CnnModel m = tiny_model(10);
  Rng rng = make_rng(80);
  AmbientSceneModel scenes{fixtures::random_image(8, 8, rng, 0.1, 0.4), 2.2};
  AttackConfig c = quick_config(1);
  c.max_iterations = 3;
  // Level 1.0 has no attacker light and must fail on its own.
  const SignalBank bank = build_signal_bank(scenes, m, {0.5, 1.0}, {t.exposure_us}, t, c);
  ASSERT_EQ(bank.entries.size(), 2u);
  EXPECT_TRUE(bank.entries[0].signal.has_value());
  EXPECT_FALSE(bank.entries[1].signal.has_value());
  EXPECT_NE(bank.entries[1].failure.find("no_signal_leverage"), std::string::npos);
  EXPECT_THROW(build_signal_bank(scenes, m, {1.0}, {t.exposure_us}, t, c), Error);
}
