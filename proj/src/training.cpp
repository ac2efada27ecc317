// SPDX-License-Identifier: Apache-2.0
#include "flicker/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "flicker/error.hpp"

namespace flicker {

namespace {

Image augment_one(const Image& image, const TransformRanges& ranges, Rng& rng) {
  const TransformParams t = sample_transform(rng, ranges);
  const ColorError c = sample_color_error(rng, ranges);
  return apply_color_error(apply_transform(image, t, /*is_ambient=*/true), c);
}

}  // namespace

Dataset augment_dataset(const Dataset& data, const TransformRanges& ranges, std::uint64_t seed) {
  Dataset out;
  out.labels = data.labels;
  out.images.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = make_rng(seed, streams::kTraining * 16 + 1, i);
    out.images.push_back(augment_one(data.images[i], ranges, rng));
  }
  return out;
}

double accuracy(const Classifier& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  int correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (model.forward(data.images[i]).strictly_predicts(data.labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainingResult train_reference(const ShapeDatasetSpec& spec, const TrainingConfig& config,
                               std::uint64_t seed, const CnnShape& shape,
                               const std::function<void(int, double)>& on_epoch) {
  require(config.epochs >= 1 && config.batch_size >= 1, "invalid_config",
          "training needs epochs >= 1 and batch_size >= 1");
  require(config.final_lr_fraction > 0.0 && config.final_lr_fraction <= 1.0, "invalid_config",
          "final_lr_fraction must be in (0, 1]");
  config.augmentation.validate();

  std::vector<int> perm = config.label_permutation;
  if (perm.empty()) {
    perm.resize(shape_labels().size());
    std::iota(perm.begin(), perm.end(), 0);
  }
  require(perm.size() == shape_labels().size(), "invalid_config",
          "label permutation must cover all classes");
  {
    std::vector<int> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      require(sorted[i] == static_cast<int>(i), "invalid_config",
              "label permutation must be a permutation of 0..K-1");
    }
  }
  std::vector<std::string> labels(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) labels.at(perm[i]) = shape_labels()[i];

  Dataset train = generate_shapes(spec, Split::kTrain);
  Dataset test = generate_shapes(spec, Split::kTest);
  for (int& l : train.labels) l = perm[l];
  for (int& l : test.labels) l = perm[l];

  CnnShape s = shape;
  s.height = s.width = spec.size;
  s.classes = static_cast<int>(labels.size());
  Rng init = make_rng(seed, streams::kInit);
  CnnModel model = CnnModel::reference(s, labels, init);
  {
    // Output unit perm[i] starts from the weights unit i would have had, so a
    // relabeled run follows the same trajectory as the original.
    auto params = model.parameters();
    auto weight = params[params.size() - 2];
    auto bias = params[params.size() - 1];
    const std::size_t k = perm.size(), in = weight.size() / k;
    const std::vector<double> w0(weight.begin(), weight.end()), b0(bias.begin(), bias.end());
    for (std::size_t i = 0; i < k; ++i) {
      std::copy_n(w0.begin() + i * in, in, weight.begin() + perm[i] * in);
      bias[perm[i]] = b0[i];
    }
  }

  std::vector<Adam> optimizers;
  for (const auto& p : model.parameters()) optimizers.emplace_back(p.size(), config.adam);

  TrainingResult result{model, 0.0, 0.0, {}};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = make_rng(seed, streams::kTraining * 16 + 2, epoch);
    std::shuffle(order.begin(), order.end(), shuffle);
    const double progress = config.epochs > 1 ? double(epoch) / double(config.epochs - 1) : 1.0;
    const double lr = config.adam.learning_rate *
                      (config.final_lr_fraction +
                       (1.0 - config.final_lr_fraction) * 0.5 * (1.0 + std::cos(M_PI * progress)));
    for (Adam& opt : optimizers) opt.set_learning_rate(lr);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ParamGradients grads = model.zero_gradients();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        Image input = train.images[idx];
        if (config.augment) {
          Rng rng = make_rng(seed, streams::kTraining * 16 + 3,
                             static_cast<std::uint64_t>(epoch) * train.size() + idx);
          input = augment_one(input, config.augmentation, rng);
        }
        epoch_loss += model.accumulate_gradients(input, train.labels[idx], grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      auto params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        for (double& g : grads.tensors[p]) g *= scale;
        optimizers[p].step(params[p], grads.tensors[p]);
      }
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(1, train.size()));
    require(std::isfinite(epoch_loss), "non_finite", "training loss became non-finite");
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  result.test_accuracy = accuracy(model, test);
  result.augmented_accuracy = accuracy(model, augment_dataset(test, config.augmentation, seed));
  result.model = std::move(model);
  if (result.test_accuracy < config.min_accuracy) {
    throw Error("accuracy_threshold",
                "reference CNN reached " + std::to_string(result.test_accuracy) +
                    " test accuracy, below the required " + std::to_string(config.min_accuracy));
  }
  return result;
}

}  // namespace flicker
