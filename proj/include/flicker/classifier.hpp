// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "flicker/image.hpp"

namespace flicker {

/// Logits and their softmax.
struct ClassifierOutput {
  std::vector<double> logits;
  std::vector<double> probabilities;

  static ClassifierOutput from_logits(std::vector<double> logits);

  int argmax() const;
  /// True when `k` holds the unique largest logit. Exact ties count as false.
  bool strictly_predicts(int k) const;
};

struct LossGradient {
  double loss = 0.0;
  Image grad;  // dL/d(input pixels), same shape as the input image
  ClassifierOutput output;
};

/// A differentiable image classifier. Weights are frozen; gradients flow
/// only to the input image.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int class_count() const = 0;
  virtual int input_height() const = 0;
  virtual int input_width() const = 0;
  virtual const std::vector<std::string>& labels() const = 0;

  virtual ClassifierOutput forward(const Image& image) const = 0;

  /// Cross-entropy -log p[target] and its exact gradient w.r.t. the input.
  virtual LossGradient loss_and_input_gradient(const Image& image, int target) const = 0;

 protected:
  void check_input(const Image& image) const;
  void check_target(int target) const;
};

}  // namespace flicker
