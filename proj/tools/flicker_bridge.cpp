// SPDX-License-Identifier: Apache-2.0
// Bridge-protocol server: serves a saved model, or fixed logits as a stub.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flicker/bridge.hpp"
#include "flicker/cnn.hpp"

int main(int argc, char** argv) {
  CLI::App app{"flicker-bridge: classifier server on stdin/stdout"};
  std::string model_path;
  std::vector<double> fixed;
  auto* model_opt = app.add_option("--model", model_path, "CNN model file")->check(CLI::ExistingFile);
  auto* fixed_opt = app.add_option("--fixed-logits", fixed, "answer every request with these logits")
                        ->delimiter(',');
  model_opt->excludes(fixed_opt);
  CLI11_PARSE(app, argc, argv);

  std::ios::sync_with_stdio(false);
  if (!model_path.empty()) {
    const flicker::CnnModel model = flicker::CnnModel::load(model_path);
    flicker::serve_bridge(std::cin, std::cout, flicker::classifier_handler(model));
    return 0;
  }
  if (fixed.empty()) {
    std::cerr << "one of --model or --fixed-logits is required\n";
    return 2;
  }
  flicker::BridgeHandler stub;
  stub.forward = [&](const flicker::Image&) { return fixed; };
  stub.gradient = [&](const flicker::Image& image, int) {
    return std::make_pair(fixed, flicker::Image(image.height, image.width));
  };
  flicker::serve_bridge(std::cin, std::cout, stub);
  return 0;
}
