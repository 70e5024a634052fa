/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "format.hpp"
#include "sizeaug/error.hpp"

namespace sizeaug {

namespace {

constexpr std::size_t kEvalChunk = 50;

struct LoadedSplit {
  std::vector<Sample> samples;
  std::vector<ImageBuffer> images;
  std::vector<Label> labels;
};

LoadedSplit load_split(const DatasetManifest& data, Split split) {
  LoadedSplit out;
  out.samples = data.split(split);
  out.images.reserve(out.samples.size());
  for (const auto& s : out.samples) {
    out.images.push_back(data.load_image(s));
    out.labels.push_back(s.label);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "momentum must lie in [0, 1)");
  }
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_acc,val_acc,train_loss\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + detail::shortest(e.train_accuracy) + "," +
           detail::shortest(e.validation_accuracy) + "," + detail::shortest(e.train_loss) + "\n";
  }
  return out;
}

double accuracy(const Model& model, std::span<const ImageBuffer> images,
                std::span<const Label> labels) {
  if (images.empty()) throw Error(ErrorCode::kEmptySplit, "nothing to evaluate");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < images.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, images.size() - start);
    const ForwardResult fwd = forward(model, images.subspan(start, n), Mode::kEval);
    for (std::size_t i = 0; i < n; ++i) {
      correct += predict_label(fwd, static_cast<int>(i)) == labels[start + i] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

double evaluate(const Model& model, const DatasetManifest& data, Split split,
                const std::optional<AugmentationPolicy>& test_policy, std::uint64_t seed) {
  LoadedSplit s = load_split(data, split);
  if (s.samples.empty()) {
    throw Error(ErrorCode::kEmptySplit, "split '" + std::string(to_string(split)) + "' is empty");
  }
  if (test_policy && !test_policy->empty()) {
    for (std::size_t i = 0; i < s.images.size(); ++i) {
      s.images[i] = apply_augmentation(s.images[i], s.samples[i], *test_policy, seed, 0);
    }
  }
  return accuracy(model, s.images, s.labels);
}

TrainResult train(const ModelConfig& config, const DatasetManifest& data, const TrainConfig& tc,
                  const AugmentationPolicy& train_policy, const EpochCallback& on_epoch) {
  tc.validate();
  const LoadedSplit tr = load_split(data, Split::kTrain);
  if (tr.samples.empty()) throw Error(ErrorCode::kEmptySplit, "train split is empty");
  const LoadedSplit val = load_split(data, Split::kValidation);

  TrainResult result{init_model(config, tc.seed), {}};
  Model& model = result.model;
  const std::size_t n = tr.samples.size();
  const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
  std::vector<std::size_t> order(n);
  std::vector<ImageBuffer> batch;
  std::vector<Label> labels;
  ForwardResult fwd;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_stream(tc.seed, "train", epoch, "shuffle"));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t m = std::min(bs, n - start);
      batch.clear();
      labels.clear();
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t idx = order[start + k];
        batch.push_back(train_policy.empty()
                            ? tr.images[idx]
                            : apply_augmentation(tr.images[idx], tr.samples[idx], train_policy,
                                                 tc.seed, epoch));
        labels.push_back(tr.labels[idx]);
      }
      const RngState drop = derive_stream(tc.seed, "batch-" + std::to_string(batches), epoch, "dropout");
      forward(model, batch, Mode::kTrain, drop, fwd);
      loss_sum += cross_entropy(fwd.probabilities, fwd.classes, labels);
      for (std::size_t k = 0; k < m; ++k) {
        correct += predict_label(fwd, static_cast<int>(k)) == labels[k] ? 1 : 0;
      }
      sgd_step(model, backward(model, fwd, labels), tc.learning_rate, tc.momentum);
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.validation_accuracy = val.images.empty() ? 0.0 : accuracy(model, val.images, val.labels);
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace sizeaug
