// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "common.hpp"
#include "flicker/cnn.hpp"
#include "flicker/error.hpp"

using namespace flicker;

namespace {

std::vector<std::string> labels(int k) {
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

CnnModel small_model(std::uint64_t seed, int size = 16) {
  CnnShape s;
  s.height = s.width = size;
  s.conv1_channels = 4;
  s.pool1 = s.pool2 = 2;
  s.conv2_channels = 6;
  s.hidden = 12;
  Rng rng = make_rng(seed, streams::kInit);
  return CnnModel::reference(s, labels(10), rng);
}

}  // namespace

TEST(ClassifierOutput, SoftmaxAndShiftInvariance) {
  const auto a = ClassifierOutput::from_logits({1.0, 2.0, -3.0, 0.5});
  const auto b = ClassifierOutput::from_logits({1001.0, 1002.0, 997.0, 1000.5});
  EXPECT_NEAR(std::accumulate(a.probabilities.begin(), a.probabilities.end(), 0.0), 1.0, 1e-12);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.probabilities[i], b.probabilities[i], 1e-9);
  EXPECT_EQ(a.argmax(), 1);
  EXPECT_EQ(b.argmax(), 1);
  EXPECT_TRUE(a.strictly_predicts(1));
  EXPECT_FALSE(a.strictly_predicts(0));
  const auto tie = ClassifierOutput::from_logits({2.0, 2.0, 1.0});
  EXPECT_FALSE(tie.strictly_predicts(0));
  EXPECT_FALSE(tie.strictly_predicts(1));
}

TEST(Cnn, ProbabilitiesSumToOneOnRandomInput) {
  const CnnModel m = small_model(1);
  Rng rng = make_rng(51);
  for (int i = 0; i < 10; ++i) {
    const auto out = m.forward(fixtures::random_image(16, 16, rng));
    ASSERT_EQ(out.logits.size(), 10u);
    EXPECT_NEAR(std::accumulate(out.probabilities.begin(), out.probabilities.end(), 0.0), 1.0, 1e-6);
  }
}

TEST(Cnn, ZeroFinalLayerGivesUniformOutputAndLnKLoss) {
  CnnModel m = small_model(2);
  auto params = m.parameters();
  for (double& w : params[params.size() - 2]) w = 0.0;
  for (double& b : params[params.size() - 1]) b = 0.0;
  Rng rng = make_rng(52);
  const Image img = fixtures::random_image(16, 16, rng);
  for (double p : m.forward(img).probabilities) EXPECT_NEAR(p, 0.1, 1e-12);
  EXPECT_NEAR(m.loss_and_input_gradient(img, 3).loss, std::log(10.0), 1e-12);
}

TEST(Cnn, SaturatedTargetHasNearZeroLoss) {
  CnnModel m = small_model(3);
  auto params = m.parameters();
  for (double& w : params[params.size() - 2]) w = 0.0;
  auto& bias = params[params.size() - 1];
  for (double& b : bias) b = 0.0;
  bias[4] = 100.0;
  const LossGradient lg = m.loss_and_input_gradient(Image(16, 16, 0.3), 4);
  EXPECT_LT(lg.loss, 1e-12);
  EXPECT_NEAR(lg.output.probabilities[4], 1.0, 1e-12);
}

TEST(Cnn, InputGradientMatchesFiniteDifferences) {
  const CnnModel m = small_model(4);
  Rng rng = make_rng(53);
  const Image img = fixtures::random_image(16, 16, rng, 0.1, 0.9);
  const LossGradient lg = m.loss_and_input_gradient(img, 7);
  const double h = 1e-4;
  for (int i = 0; i < 8; ++i) {
    const std::size_t k = static_cast<std::size_t>(uniform_int(rng, 0, int(img.data.size()) - 1));
    Image p = img, q = img;
    p.data[k] += h;
    q.data[k] -= h;
    const double fd = (m.loss_and_input_gradient(p, 7).loss - m.loss_and_input_gradient(q, 7).loss) / (2 * h);
    EXPECT_LT(fixtures::rel_error(lg.grad.data[k], fd, 1e-7), 1e-3) << "pixel " << k;
  }
}

TEST(Cnn, EveryLayerTypeGradientMatchesFiniteDifferences) {
  // Bespoke stack with every layer kind and odd pooling to exercise shapes.
  Rng rng = make_rng(54);
  auto rnd = [&](std::size_t n, double s) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(rng, -s, s);
    return v;
  };
  std::vector<Layer> layers = {ChannelStandardize{},
                               Conv2d{3, 2, rnd(2 * 3 * 9, 0.5), rnd(2, 0.1)},
                               Relu{},
                               AvgPool{3},
                               Dense{2 * 2 * 2, 5, rnd(5 * 8, 0.5), rnd(5, 0.1)},
                               Relu{},
                               Dense{5, 3, rnd(15, 0.5), rnd(3, 0.1)}};
  const CnnModel m(layers, 6, 6, labels(3));
  const Image img = fixtures::random_image(6, 6, rng);
  const LossGradient lg = m.loss_and_input_gradient(img, 1);
  const double h = 1e-5;
  for (std::size_t k = 0; k < img.data.size(); ++k) {
    Image p = img, q = img;
    p.data[k] += h;
    q.data[k] -= h;
    const double fd = (m.loss_and_input_gradient(p, 1).loss - m.loss_and_input_gradient(q, 1).loss) / (2 * h);
    EXPECT_LT(fixtures::rel_error(lg.grad.data[k], fd, 1e-6), 1e-3) << "pixel " << k;
  }
}

TEST(Cnn, ParameterGradientsMatchFiniteDifferences) {
  CnnModel m = small_model(5, 8);
  Rng rng = make_rng(55);
  const Image img = fixtures::random_image(8, 8, rng);
  ParamGradients grads = m.zero_gradients();
  m.accumulate_gradients(img, 2, grads);
  auto params = m.parameters();
  const double h = 1e-5;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t k = static_cast<std::size_t>(uniform_int(rng, 0, int(params[t].size()) - 1));
      const double orig = params[t][k];
      params[t][k] = orig + h;
      const double lp = m.loss_and_input_gradient(img, 2).loss;
      params[t][k] = orig - h;
      const double lm = m.loss_and_input_gradient(img, 2).loss;
      params[t][k] = orig;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_LT(fixtures::rel_error(grads.tensors[t][k], fd, 1e-6), 1e-3) << "tensor " << t;
    }
  }
}

TEST(Cnn, DeterministicLogits) {
  const CnnModel a = small_model(6), b = small_model(6);
  Rng rng = make_rng(56);
  const Image img = fixtures::random_image(16, 16, rng);
  EXPECT_EQ(a.forward(img).logits, b.forward(img).logits);
  EXPECT_EQ(a.forward(img).logits, a.forward(img).logits);
}

TEST(Cnn, RejectsBadInputs) {
  const CnnModel m = small_model(7);
  EXPECT_THROW(m.forward(Image(15, 16)), Error);
  EXPECT_THROW(m.loss_and_input_gradient(Image(16, 16), 10), Error);
  EXPECT_THROW(m.loss_and_input_gradient(Image(16, 16), -1), Error);
  EXPECT_THROW(CnnModel({Dense{5, 3, std::vector<double>(15), std::vector<double>(3)}}, 4, 4, labels(3)),
               Error);
}

TEST(Cnn, JsonRoundTripIsExact) {
  const CnnModel m = small_model(8);
  const CnnModel back = CnnModel::from_json(m.to_json());
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_EQ(back.labels(), m.labels());
  Rng rng = make_rng(57);
  const Image img = fixtures::random_image(16, 16, rng);
  EXPECT_EQ(back.forward(img).logits, m.forward(img).logits);
  EXPECT_THROW(CnnModel::from_json("{\"format\": \"nope\"}"), Error);
}
