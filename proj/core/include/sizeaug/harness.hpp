/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sizeaug/augment.hpp"
#include "sizeaug/metrics.hpp"
#include "sizeaug/model.hpp"
#include "sizeaug/synth.hpp"
#include "sizeaug/train.hpp"

namespace sizeaug {

// Row order of the results table.
inline constexpr std::array<std::string_view, 5> kRegimeNames = {
    "none", "rot_contrast", "resizing", "full", "inverse"};

struct Regime {
  std::string name;
  AugmentationPolicy train_policy;
  AugmentationPolicy test_policy;
};

// none: nothing; rot_contrast: rotation + contrast; resizing: class zoom;
// full: all three; inverse: class zoom with the ranges swapped. The test
// policy is always the +-0.5 table. Throws InvalidArgument.
Regime make_regime(std::string_view name);
std::vector<Regime> all_regimes();

struct RegimeReport {
  std::string regime;
  int replicate = 0;
  double train_accuracy = 0.0;  // clean train split
  double test_accuracy = 0.0;   // test split under the test policy
  double gap = 0.0;             // train_accuracy - test_accuracy
  TrainHistory history;
  LesionStats size_stats;       // training split after one augmentation pass
};

struct ExperimentConfig {
  SynthConfig synth;
  ModelConfig model = micro_default_config();
  TrainConfig train;
  std::uint64_t master_seed = 42;
  int replicates = 3;
  int stats_limit = 300;  // lesions measured per class for size stats

  void validate() const;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
// Keys "synth", "model", "train", "master_seed", "replicates", "stats_limit";
// missing keys keep their defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Trains a fresh model (train seed `seed`) under the regime's training
// policy and scores it; the same seed drives test-time augmentation.
RegimeReport run_regime(const Regime& regime, const DatasetManifest& data,
                        const ExperimentConfig& config, std::uint64_t seed, int replicate = 0);

using ProgressCallback = std::function<void(const RegimeReport&)>;

// Replicate r synthesizes its dataset with seed master_seed + r and runs
// every regime on it with that same seed. Reports are replicate-major in
// kRegimeNames order.
std::vector<RegimeReport> run_table_iv(const ExperimentConfig& config,
                                       const ProgressCallback& progress = {});

struct RegimeMeans {
  std::string regime;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double gap = 0.0;  // train_accuracy - test_accuracy of the means
};

// Means over replicates, in kRegimeNames order.
std::vector<RegimeMeans> regime_means(std::span<const RegimeReport> reports);

struct Gaps {
  double none = 0.0;
  double rot_contrast = 0.0;
  double resizing = 0.0;
  double full = 0.0;
  double inverse = 0.0;
};

struct GapVerdict {
  Gaps gaps;
  bool inverse_gt_none = false;
  bool none_gt_rot_contrast = false;
  bool rot_contrast_gt_resizing = false;
  bool resizing_gt_full = false;
  bool full_below_limit = false;   // gap(full) < 0.05
  bool none_above_full = false;    // gap(none) >= gap(full) + 0.05

  bool ordering_holds() const {
    return inverse_gt_none && none_gt_rot_contrast && rot_contrast_gt_resizing && resizing_gt_full;
  }
  bool pass() const { return ordering_holds() && full_below_limit && none_above_full; }
  // Names of the failed checks, in the order above.
  std::vector<std::string> violations() const;
};

GapVerdict verify_gap_ordering(const Gaps& gaps);
GapVerdict verify_gap_ordering(std::span<const RegimeReport> reports);

struct NeutralizationCheck {
  int replicate = 0;
  double none_ks = 0.0;
  double resizing_ks = 0.0;
  double full_ks = 0.0;
  double resizing_probe = 0.0;
  double full_probe = 0.0;
  double inverse_probe = 0.0;

  // Zoomed regimes at most halve D and keep the probe <= 0.60; the
  // inverse regime keeps the probe above 0.60.
  bool pass() const;
};

std::vector<NeutralizationCheck> check_neutralization(std::span<const RegimeReport> reports);

nlohmann::json report_to_json(const RegimeReport& report);
nlohmann::json verdict_to_json(const GapVerdict& verdict,
                               std::span<const NeutralizationCheck> checks);

// Writes table_iv.csv, table_iv.json, verdict.json and per regime
// curves_<regime>.csv and curves_<regime>.svg (replicate-mean curves).
void emit_report(std::span<const RegimeReport> reports, const std::filesystem::path& out_dir);

// Two polylines (train and validation accuracy per epoch) on a fixed canvas.
std::string accuracy_chart_svg(const std::string& title, std::span<const double> train,
                               std::span<const double> validation);

// Reference rows of the 224x224 VGG19 layer table: layer label, output
// shape as printed, parameter count.
struct ReferenceRow {
  std::string_view layer;
  std::string_view output;
  std::int64_t params;
};
std::span<const ReferenceRow> table3_reference();

}  // namespace sizeaug
