// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flicker/image.hpp"
#include "flicker/rng.hpp"

namespace flicker {

/// Procedural dataset: ten classes of colored geometric shapes on smoothly
/// textured backgrounds. Fully determined by the seed.
struct ShapeDatasetSpec {
  int size = 64;
  int train_count = 3000;
  int test_count = 600;
  std::uint64_t seed = 1;
};

enum class Split { kTrain = 0, kTest = 1 };

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

const std::vector<std::string>& shape_labels();

/// One image of class `label` (0..9).
Image render_shape(int label, int size, Rng& rng);

/// Balanced split: sample i has label i % 10.
Dataset generate_shapes(const ShapeDatasetSpec& spec, Split split);

/// Sample `index` of the given split, identical to generate_shapes()[index].
Image shape_sample(const ShapeDatasetSpec& spec, Split split, int index);

}  // namespace flicker
