/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sizeaug/augment.hpp"
#include "sizeaug/manifest.hpp"
#include "sizeaug/model.hpp"

namespace sizeaug {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 0.003;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  // epochs >= 1, batch_size >= 1, learning_rate > 0, 0 <= momentum < 1.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double train_accuracy = 0.0;       // running accuracy over the epoch's augmented minibatches
  double validation_accuracy = 0.0;  // clean validation split, eval mode
  double train_loss = 0.0;           // mean minibatch loss

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // "epoch,train_acc,val_acc,train_loss" with one row per epoch.
  std::string to_csv() const;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minibatch SGD on the train split. Every epoch reshuffles with
// derive_stream(seed, "train", epoch, "shuffle") and re-augments each sample
// with `train_policy` at that epoch index; dropout masks come from
// derive_stream(seed, "batch-<b>", epoch, "dropout"). An empty validation
// split records accuracy 0. Throws EmptySplit when there is nothing to train on.
TrainResult train(const ModelConfig& config, const DatasetManifest& data, const TrainConfig& tc,
                  const AugmentationPolicy& train_policy, const EpochCallback& on_epoch = {});

// Fraction of correctly classified samples in `split`, each optionally
// augmented by `test_policy` at epoch 0 under `seed`. Throws EmptySplit.
double evaluate(const Model& model, const DatasetManifest& data, Split split,
                const std::optional<AugmentationPolicy>& test_policy, std::uint64_t seed);

// Batched eval-mode accuracy over preloaded images.
double accuracy(const Model& model, std::span<const ImageBuffer> images,
                std::span<const Label> labels);

}  // namespace sizeaug
