// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flicker/classifier.hpp"

namespace flicker {

/// Base64 of row-major (y, x, channel) float32 little-endian pixels.
std::string encode_pixels(const Image& image);
Image decode_pixels(const std::string& text, int height, int width);

/// Classifier backed by a child process speaking the line protocol on its
/// stdin/stdout. One request in flight at a time.
class BridgeClassifier final : public Classifier {
 public:
  /// `command` runs under /bin/sh -c. With empty `labels` the class count is
  /// learned from a probe request and labels are "class_<i>".
  BridgeClassifier(const std::string& command, int height, int width,
                   std::vector<std::string> labels = {}, int timeout_ms = 30000);
  ~BridgeClassifier() override;
  BridgeClassifier(const BridgeClassifier&) = delete;
  BridgeClassifier& operator=(const BridgeClassifier&) = delete;

  int class_count() const override { return static_cast<int>(labels_.size()); }
  int input_height() const override { return height_; }
  int input_width() const override { return width_; }
  const std::vector<std::string>& labels() const override { return labels_; }

  ClassifierOutput forward(const Image& image) const override;
  LossGradient loss_and_input_gradient(const Image& image, int target) const override;

 private:
  std::string request(const std::string& line) const;
  std::vector<double> parse_logits(const std::string& response, std::optional<Image>* grad) const;

  int height_;
  int width_;
  std::vector<std::string> labels_;
  int timeout_ms_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::string buffer_;
  mutable std::mutex mutex_;
};

/// Server side of the protocol: reads requests from `in` until EOF and
/// answers each on `out`. Handler exceptions become {"error": ...} replies.
struct BridgeHandler {
  std::function<std::vector<double>(const Image&)> forward;
  /// Returns logits and the input gradient of -log softmax[target].
  std::function<std::pair<std::vector<double>, Image>(const Image&, int)> gradient;
};
void serve_bridge(std::istream& in, std::ostream& out, const BridgeHandler& handler);

/// Handler answering with a built-in classifier.
BridgeHandler classifier_handler(const Classifier& classifier);

}  // namespace flicker
