// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flicker/classifier.hpp"
#include "flicker/rng.hpp"

namespace flicker {

/// CHW activation tensor.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(std::size_t(c) * h * w) {}
  std::size_t size() const { return data.size(); }
};

/// 3x3 convolution, stride 1, zero padding 1.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;  // [out][in][3][3]
  std::vector<double> bias;    // [out]
};

/// Per-channel standardization over the spatial dimensions:
/// (x - mean_c) / sqrt(var_c + epsilon). Parameter-free.
struct ChannelStandardize {
  double epsilon = 1e-4;
};

struct Relu {};

/// Non-overlapping size x size average pooling.
struct AvgPool {
  int size = 2;
};

/// Fully connected over the flattened input.
struct Dense {
  int in_features = 0;
  int out_features = 0;
  std::vector<double> weight;  // [out][in]
  std::vector<double> bias;    // [out]
};

using Layer = std::variant<ChannelStandardize, Conv2d, Relu, AvgPool, Dense>;

/// Parameter gradients, one entry per parameterized layer in layer order
/// (weight then bias).
struct ParamGradients {
  std::vector<std::vector<double>> tensors;
};

struct CnnShape {
  int height = 64;
  int width = 64;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int hidden = 64;
  int classes = 10;
  int pool1 = 4;
  int pool2 = 4;
};

/// Small feed-forward CNN: standardize, conv-relu-pool, conv-relu-pool,
/// dense-relu, dense.
class CnnModel final : public Classifier {
 public:
  CnnModel(std::vector<Layer> layers, int height, int width, std::vector<std::string> labels);

  /// He-initialized model of the reference architecture.
  static CnnModel reference(const CnnShape& shape, std::vector<std::string> labels, Rng& rng);

  int class_count() const override { return static_cast<int>(labels_.size()); }
  int input_height() const override { return height_; }
  int input_width() const override { return width_; }
  const std::vector<std::string>& labels() const override { return labels_; }

  ClassifierOutput forward(const Image& image) const override;
  LossGradient loss_and_input_gradient(const Image& image, int target) const override;

  /// Forward + backward for training: returns the loss and accumulates the
  /// parameter gradients of -log p[target] into `grads`.
  double accumulate_gradients(const Image& image, int target, ParamGradients& grads) const;

  ParamGradients zero_gradients() const;
  /// Views of every parameter tensor, aligned with ParamGradients::tensors.
  std::vector<std::span<double>> parameters();

  const std::vector<Layer>& layers() const { return layers_; }

  void save(const std::filesystem::path& path) const;
  static CnnModel load(const std::filesystem::path& path);
  std::string to_json() const;
  static CnnModel from_json(const std::string& text);

 private:
  std::vector<Tensor> forward_trace(const Image& image) const;
  Tensor backward(const std::vector<Tensor>& trace, std::vector<double> dlogits,
                  ParamGradients* grads) const;

  std::vector<Layer> layers_;
  int height_;
  int width_;
  std::vector<std::string> labels_;
};

}  // namespace flicker
