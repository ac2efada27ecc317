// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "common.hpp"
#include "flicker/camera.hpp"
#include "flicker/error.hpp"

using namespace flicker;

namespace {

CameraTimings timings(int rows, double te, double tr) {
  CameraTimings t;
  t.rows = rows;
  t.cols = rows;
  t.exposure_us = te;
  t.readout_us = tr;
  return t;
}

}  // namespace

TEST(SignalLength, FullResolutionFrame) { EXPECT_EQ(signal_length(timings(252, 500, 120)), 257); }

TEST(SignalLength, SingleSlotExposure) { EXPECT_EQ(signal_length(timings(64, 120, 120)), 65); }

TEST(SignalLength, FractionalRatioRoundsUp) { EXPECT_EQ(signal_length(timings(224, 1333, 120)), 236); }

TEST(SignalLength, DefaultTimings) {
  const CameraTimings t;
  EXPECT_EQ(exposure_slots(t), 5);
  EXPECT_EQ(signal_length(t), 69);
}

TEST(CameraTimings, RejectsInvalidValues) {
  EXPECT_THROW(timings(64, 100, 120).validate(), Error);
  EXPECT_THROW(timings(0, 500, 120).validate(), Error);
  CameraTimings t;
  t.gamma = 0.0;
  EXPECT_THROW(t.validate(), Error);
  t = CameraTimings{};
  t.readout_us = -1.0;
  EXPECT_THROW(t.validate(), Error);
}

TEST(ShutterKernel, SingleSlot) {
  const auto k = build_shutter_kernel(timings(8, 120, 120));
  ASSERT_EQ(k.size(), 1);
  EXPECT_EQ(k.weights[0], 1.0);
}

TEST(ShutterKernel, TwoFullSlots) {
  const auto k = build_shutter_kernel(timings(8, 240, 120));
  ASSERT_EQ(k.size(), 2);
  EXPECT_EQ(k.weights[0], 0.5);
  EXPECT_EQ(k.weights[1], 0.5);
}

TEST(ShutterKernel, PartialLastSlotMatchesIntegration) {
  // 1 us integration of a 180 us window over 120 us slots: 120/180, 60/180.
  const auto k = build_shutter_kernel(timings(8, 180, 120));
  ASSERT_EQ(k.size(), 2);
  EXPECT_NEAR(k.weights[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(k.weights[1], 1.0 / 3.0, 1e-12);
}

TEST(ShutterKernel, WeightsSumToOneProperty) {
  Rng rng = make_rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double tr = uniform(rng, 1.0, 200.0);
    const double te = tr * uniform(rng, 1.0, 40.0);
    const auto k = build_shutter_kernel(timings(8, te, tr));
    EXPECT_EQ(k.size(), static_cast<int>(std::ceil(te / tr - 1e-9)));
    EXPECT_NEAR(std::accumulate(k.weights.begin(), k.weights.end(), 0.0), 1.0, 1e-12);
    for (int j = 0; j + 1 < k.size(); ++j) EXPECT_NEAR(k.weights[j], tr / te, 1e-12);
    for (double w : k.weights) EXPECT_GE(w, 0.0);
  }
}

TEST(LightSignal, ValidatesShapeAndRange) {
  const CameraTimings t = timings(4, 240, 120);
  EXPECT_NO_THROW(LightSignal(ChannelMatrix(3, 6, 0.5), t));
  EXPECT_THROW(LightSignal(ChannelMatrix(3, 5, 0.5), t), Error);
  EXPECT_THROW(LightSignal(ChannelMatrix(2, 6, 0.5), t), Error);
  ChannelMatrix bad(3, 6, 0.5);
  bad.at(1, 2) = 1.0000001;
  EXPECT_THROW(LightSignal(bad, t), Error);
  bad.at(1, 2) = std::nan("");
  EXPECT_THROW(LightSignal(bad, t), Error);
}

TEST(LightSignal, LengthInvariantProperty) {
  Rng rng = make_rng(12);
  for (int i = 0; i < 200; ++i) {
    const CameraTimings t = timings(uniform_int(rng, 1, 300), uniform(rng, 120, 5000), 120);
    const LightSignal s = LightSignal::constant(t, 0.25);
    EXPECT_EQ(s.length(), signal_length(t));
  }
}

TEST(Reparameterize, KnownValues) {
  ChannelMatrix v(1, 3);
  v.data = {0.0, 20.0, 1.0};
  const ChannelMatrix f = reparameterize(v);
  EXPECT_EQ(f.data[0], 0.5);
  EXPECT_NEAR(f.data[1], 1.0, 1e-12);
  EXPECT_NEAR(f.data[2], 0.880797077977882, 1e-12);
}

TEST(Reparameterize, BoundedMonotoneAndSymmetric) {
  Rng rng = make_rng(13);
  ChannelMatrix v = random_variables(3, 500, rng);
  for (double& x : v.data) x *= 8.0;
  ChannelMatrix neg = v;
  for (double& x : neg.data) x = -x;
  const ChannelMatrix f = reparameterize(v);
  const ChannelMatrix g = reparameterize(neg);
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    EXPECT_GT(f.data[i], 0.0);
    EXPECT_LT(f.data[i], 1.0);
    EXPECT_NEAR(g.data[i], 1.0 - f.data[i], 1e-15);
  }
  ChannelMatrix sorted(1, 200);
  for (int i = 0; i < 200; ++i) sorted.data[i] = -5.0 + 0.05 * i;
  const ChannelMatrix s = reparameterize(sorted);
  for (int i = 1; i < 200; ++i) EXPECT_GT(s.data[i], s.data[i - 1]);
}

TEST(ReparameterizeBackward, KnownValues) {
  ChannelMatrix v(1, 2), up(1, 2, 1.0);
  v.data = {0.0, 20.0};
  const ChannelMatrix g = reparameterize_backward(v, up);
  EXPECT_EQ(g.data[0], 0.5);
  EXPECT_LT(g.data[1], 1e-12);
}

TEST(ReparameterizeBackward, MatchesFiniteDifferences) {
  Rng rng = make_rng(14);
  ChannelMatrix v = random_variables(3, 40, rng);
  ChannelMatrix up(3, 40);
  for (double& u : up.data) u = uniform(rng, -2.0, 2.0);
  const ChannelMatrix g = reparameterize_backward(v, up);
  const double h = 1e-5;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    ChannelMatrix p = v, m = v;
    p.data[i] += h;
    m.data[i] -= h;
    const double fd = (reparameterize(p).data[i] - reparameterize(m).data[i]) / (2 * h) * up.data[i];
    EXPECT_LT(fixtures::rel_error(g.data[i], fd), 1e-6);
  }
}

TEST(ReparameterizeBackward, ShapeMismatchThrows) {
  try {
    reparameterize_backward(ChannelMatrix(3, 4), ChannelMatrix(3, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "shape_mismatch");
  }
}

TEST(RandomVariables, UniformInUnitBoxAndSeeded) {
  Rng a = make_rng(5, streams::kInit), b = make_rng(5, streams::kInit);
  const ChannelMatrix x = random_variables(3, 100, a), y = random_variables(3, 100, b);
  EXPECT_EQ(x, y);
  for (double v : x.data) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}
