// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flicker/adam.hpp"
#include "flicker/cnn.hpp"
#include "flicker/dataset.hpp"
#include "flicker/transforms.hpp"

namespace flicker {

struct TrainingConfig {
  int epochs = 40;
  int batch_size = 16;
  AdamConfig adam{0.004, 0.9, 0.999, 1e-8};
  /// Learning rate follows a cosine from adam.learning_rate down to
  /// adam.learning_rate * final_lr_fraction over the epochs.
  double final_lr_fraction = 0.1;
  /// Training images are passed through a sampled viewpoint/lighting
  /// transform and color error, drawn from these ranges.
  bool augment = true;
  TransformRanges augmentation{};
  double min_accuracy = 0.95;
  /// Optional relabeling: dataset class i is trained as class permutation[i].
  std::vector<int> label_permutation;
};

struct TrainingResult {
  CnnModel model;
  /// Accuracy on the held-out split as generated.
  double test_accuracy = 0.0;
  /// Accuracy on the held-out split after one sampled augmentation per image.
  double augmented_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// Deterministic augmented copy of a split (one transform per image).
Dataset augment_dataset(const Dataset& data, const TransformRanges& ranges, std::uint64_t seed);

/// Fraction of images whose strict argmax equals the label.
double accuracy(const Classifier& model, const Dataset& data);

/// Train the reference CNN on the procedural shapes dataset with ADAM.
/// Throws Error("accuracy_threshold") when test_accuracy stays below
/// config.min_accuracy.
TrainingResult train_reference(const ShapeDatasetSpec& data, const TrainingConfig& config,
                               std::uint64_t seed, const CnnShape& shape = {},
                               const std::function<void(int, double)>& on_epoch = {});

}  // namespace flicker
