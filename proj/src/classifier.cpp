// SPDX-License-Identifier: Apache-2.0
#include "flicker/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flicker/error.hpp"

namespace flicker {

ClassifierOutput ClassifierOutput::from_logits(std::vector<double> logits) {
  ClassifierOutput out;
  out.probabilities.resize(logits.size());
  if (!logits.empty()) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      out.probabilities[i] = std::exp(logits[i] - top);
      total += out.probabilities[i];
    }
    for (double& p : out.probabilities) p /= total;
  }
  out.logits = std::move(logits);
  return out;
}

int ClassifierOutput::argmax() const {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

bool ClassifierOutput::strictly_predicts(int k) const {
  if (k < 0 || k >= static_cast<int>(logits.size())) return false;
  for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
    if (i != k && logits[i] >= logits[k]) return false;
  }
  return true;
}

void Classifier::check_input(const Image& image) const {
  require(image.height == input_height() && image.width == input_width(), "shape_mismatch",
          "classifier expects " + std::to_string(input_height()) + "x" +
              std::to_string(input_width()) + " input, got " + std::to_string(image.height) +
              "x" + std::to_string(image.width));
}

void Classifier::check_target(int target) const {
  require(target >= 0 && target < class_count(), "invalid_class",
          "class index " + std::to_string(target) + " outside [0, " +
              std::to_string(class_count()) + ")");
}

}  // namespace flicker
