// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "common.hpp"
#include "flicker/attack.hpp"
#include "flicker/bridge.hpp"
#include "flicker/cnn.hpp"
#include "flicker/error.hpp"
#include "flicker/io.hpp"

using namespace flicker;
namespace fs = std::filesystem;

namespace {

const std::string kBridge = FLICKER_BRIDGE_BIN;

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(BridgePixels, Base64RoundTripIsFloat32Exact) {
  Rng rng = make_rng(61);
  const Image img = fixtures::random_image(5, 7, rng);
  const Image back = decode_pixels(encode_pixels(img), 5, 7);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    EXPECT_EQ(back.data[i], static_cast<double>(static_cast<float>(img.data[i])));
  }
  EXPECT_THROW(decode_pixels(encode_pixels(img), 5, 6), Error);
  EXPECT_THROW(decode_pixels("***", 1, 1), Error);
}

TEST(BridgePixels, LittleEndianLayout) {
  Image img(1, 1);
  img.data = {1.0, 0.0, -2.0};
  // 1.0f = 00 00 80 3f, 0.0f = 0, -2.0f = 00 00 00 c0
  EXPECT_EQ(encode_pixels(img), "AACAPwAAAAAAAADA");
}

TEST(Bridge, EchoStubLogitsAreParsed) {
  BridgeClassifier c(kBridge + " --fixed-logits 0.5,-1,2.25", 4, 4);
  ASSERT_EQ(c.class_count(), 3);
  EXPECT_EQ(c.labels()[2], "class_2");
  const auto out = c.forward(Image(4, 4, 0.5));
  EXPECT_EQ(out.logits, (std::vector<double>{0.5, -1.0, 2.25}));
  const auto expected = ClassifierOutput::from_logits({0.5, -1.0, 2.25});
  EXPECT_EQ(out.probabilities, expected.probabilities);
  const LossGradient lg = c.loss_and_input_gradient(Image(4, 4, 0.5), 1);
  EXPECT_NEAR(lg.loss, -std::log(expected.probabilities[1]), 1e-12);
  for (double g : lg.grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Bridge, ZeroGradientStubMakesNoProgress) {
  CameraTimings t;
  t.rows = t.cols = 8;
  BridgeClassifier c(kBridge + " --fixed-logits 0,1,0", 8, 8);
  Rng rng = make_rng(62);
  const ScenePair scene = fixtures::random_scene(8, 8, rng);
  AttackConfig cfg;
  cfg.target_class = 2;
  cfg.max_iterations = 12;
  cfg.batch_size = 2;
  cfg.convergence_window = 100;
  const AttackResult r = optimize_signal(scene, c, t, cfg);
  ASSERT_EQ(r.loss_trace.size(), 12u);
  for (double l : r.loss_trace) EXPECT_EQ(l, r.loss_trace.front());
  Rng init = make_rng(cfg.seed, streams::kInit);
  const ChannelMatrix v0 = random_variables(3, signal_length(t), init);
  EXPECT_EQ(r.signal.values(), reparameterize(v0));
}

TEST(Bridge, SelfBridgeMatchesDirectModel) {
  CnnShape s;
  s.height = s.width = 16;
  Rng init = make_rng(63, streams::kInit);
  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) names.push_back("n" + std::to_string(i));
  const CnnModel model = CnnModel::reference(s, names, init);
  const fs::path path = fs::temp_directory_path() / "flicker_self_bridge_model.json";
  model.save(path);
  BridgeClassifier bridged(kBridge + " --model " + path.string(), 16, 16, names);
  Rng rng = make_rng(64);
  for (int i = 0; i < 5; ++i) {
    Image img = fixtures::random_image(16, 16, rng);
    for (double& v : img.data) v = static_cast<float>(v);
    const auto direct = model.loss_and_input_gradient(img, i);
    const auto remote = bridged.loss_and_input_gradient(img, i);
    for (int k = 0; k < 10; ++k) {
      EXPECT_NEAR(remote.output.logits[k], direct.output.logits[k], 1e-6);
    }
    EXPECT_NEAR(remote.loss, direct.loss, 1e-6);
    for (std::size_t p = 0; p < img.data.size(); ++p) EXPECT_NEAR(remote.grad.data[p], direct.grad.data[p], 1e-6);
    const auto fwd = bridged.forward(img);
    for (int k = 0; k < 10; ++k) EXPECT_NEAR(fwd.logits[k], direct.output.logits[k], 1e-6);
  }
  fs::remove(path);
}

TEST(Bridge, ProtocolViolationsAreReported) {
  EXPECT_EQ(error_code([] { BridgeClassifier c("echo not-json", 2, 2); }), "bridge");
  EXPECT_EQ(error_code([] { BridgeClassifier c("echo '{\"logits\": []}'", 2, 2); }), "bridge");
  EXPECT_EQ(error_code([] { BridgeClassifier c("echo '{\"error\": \"boom\"}'", 2, 2); }), "bridge");
  EXPECT_EQ(error_code([] { BridgeClassifier c("true", 2, 2); }), "bridge");
  EXPECT_EQ(error_code([] { BridgeClassifier c("sleep 5", 2, 2, {}, 200); }), "bridge_timeout");
}

TEST(Bridge, NonFiniteValuesAreRejected) {
  // 1e999 parses as infinity in JSON readers that accept it; nlohmann rejects
  // it as out of range, so both paths end in a bridge error.
  EXPECT_EQ(error_code([] { BridgeClassifier c("echo '{\"logits\": [1, 1e999]}'", 2, 2); }), "bridge");
  // NaN in the gradient block: float32 0x7fc00000 repeated.
  const std::string nan_grad = "AADAfwAAwH8AAMB/";
  const std::string cmd = "while read l; do echo '{\"logits\": [0, 1], \"grad\": \"" + nan_grad + "\"}'; done";
  BridgeClassifier c(cmd, 1, 1, {"a", "b"});
  EXPECT_EQ(error_code([&] { c.loss_and_input_gradient(Image(1, 1, 0.5), 0); }), "bridge");
}

TEST(Bridge, ServerAnswersErrorsInline) {
  std::istringstream in("{\"op\": \"frobnicate\", \"height\": 1, \"width\": 1, \"pixels\": \"AAAAAAAAAAAAAAAA\"}\n"
                        "garbage\n");
  std::ostringstream out;
  BridgeHandler h;
  h.forward = [](const Image&) { return std::vector<double>{1.0}; };
  serve_bridge(in, out, h);
  std::istringstream lines(out.str());
  std::string a, b;
  std::getline(lines, a);
  std::getline(lines, b);
  EXPECT_NE(a.find("\"error\""), std::string::npos);
  EXPECT_NE(b.find("\"error\""), std::string::npos);
}
