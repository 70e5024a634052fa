/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "format.hpp"
#include "sizeaug/error.hpp"

namespace sizeaug {

namespace {

constexpr double kFullGapLimit = 0.05;
constexpr double kNoneMargin = 0.05;
constexpr double kKsShrink = 0.5;
constexpr double kProbeChance = 0.60;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

const RegimeReport* find_report(std::span<const RegimeReport> reports, int replicate,
                                std::string_view regime) {
  for (const auto& r : reports) {
    if (r.replicate == replicate && r.regime == regime) return &r;
  }
  return nullptr;
}

}  // namespace

Regime make_regime(std::string_view name) {
  const AugmentationPolicy table1 = train_table1_policy();
  Regime r{std::string(name), {}, test_table2_policy()};
  if (name == "none") {
  } else if (name == "rot_contrast") {
    r.train_policy = table1.without(Method::kZoom);
  } else if (name == "resizing") {
    r.train_policy = table1.only(Method::kZoom);
  } else if (name == "full") {
    r.train_policy = table1;
  } else if (name == "inverse") {
    r.train_policy = train_inverse_policy().only(Method::kZoom);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown regime '" + std::string(name) + "'");
  }
  return r;
}

std::vector<Regime> all_regimes() {
  std::vector<Regime> out;
  for (auto name : kRegimeNames) out.push_back(make_regime(name));
  return out;
}

void ExperimentConfig::validate() const {
  synth.validate();
  validate_config(model);
  train.validate();
  if (replicates < 1) throw Error(ErrorCode::kInvalidArgument, "replicates must be >= 1");
  if (stats_limit < 5) throw Error(ErrorCode::kInvalidArgument, "stats_limit must be >= 5");
  const Shape& in = output_shape(model.layers.front(), {});
  if (in.height != synth.image_size || in.width != synth.image_size) {
    throw Error(ErrorCode::kShapeMismatch, "model input " + in.to_string() +
                                               " does not match synthetic image size " +
                                               std::to_string(synth.image_size));
  }
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  return {{"synth", synth_config_to_json(c.synth)},
          {"model", model_config_to_json(c.model)},
          {"train", train_config_to_json(c.train)},
          {"master_seed", c.master_seed},
          {"replicates", c.replicates},
          {"stats_limit", c.stats_limit}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    c.master_seed = j.value("master_seed", c.master_seed);
    c.replicates = j.value("replicates", c.replicates);
    c.stats_limit = j.value("stats_limit", c.stats_limit);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

RegimeReport run_regime(const Regime& regime, const DatasetManifest& data,
                        const ExperimentConfig& config, std::uint64_t seed, int replicate) {
  TrainConfig tc = config.train;
  tc.seed = seed;
  TrainResult trained = train(config.model, data, tc, regime.train_policy);

  RegimeReport report;
  report.regime = regime.name;
  report.replicate = replicate;
  report.history = std::move(trained.history);
  report.train_accuracy = evaluate(trained.model, data, Split::kTrain, std::nullopt, seed);
  report.test_accuracy = evaluate(trained.model, data, Split::kTest, regime.test_policy, seed);
  report.gap = report.train_accuracy - report.test_accuracy;

  std::vector<Sample> augmented = data.split(Split::kTrain);
  for (auto& s : augmented) {
    ImageBuffer img = data.load_image(s);
    if (!regime.train_policy.empty()) img = apply_augmentation(img, s, regime.train_policy, seed, 0);
    s.image = std::make_shared<const ImageBuffer>(std::move(img));
  }
  report.size_stats = class_size_stats(augmented, data, config.stats_limit);
  return report;
}

std::vector<RegimeReport> run_table_iv(const ExperimentConfig& config,
                                       const ProgressCallback& progress) {
  config.validate();
  std::vector<RegimeReport> reports;
  const auto regimes = all_regimes();
  for (int r = 0; r < config.replicates; ++r) {
    const std::uint64_t seed = config.master_seed + static_cast<std::uint64_t>(r);
    const DatasetManifest data = generate_samples(config.synth, seed);
    for (const auto& regime : regimes) {
      reports.push_back(run_regime(regime, data, config, seed, r));
      if (progress) progress(reports.back());
    }
  }
  return reports;
}

std::vector<RegimeMeans> regime_means(std::span<const RegimeReport> reports) {
  std::vector<RegimeMeans> means;
  for (auto name : kRegimeNames) {
    RegimeMeans m{std::string(name)};
    int count = 0;
    for (const auto& r : reports) {
      if (r.regime != name) continue;
      m.train_accuracy += r.train_accuracy;
      m.test_accuracy += r.test_accuracy;
      ++count;
    }
    if (count == 0) continue;
    m.train_accuracy /= count;
    m.test_accuracy /= count;
    m.gap = m.train_accuracy - m.test_accuracy;
    means.push_back(m);
  }
  return means;
}

std::vector<std::string> GapVerdict::violations() const {
  std::vector<std::string> out;
  if (!inverse_gt_none) out.emplace_back("inverse>none");
  if (!none_gt_rot_contrast) out.emplace_back("none>rot_contrast");
  if (!rot_contrast_gt_resizing) out.emplace_back("rot_contrast>resizing");
  if (!resizing_gt_full) out.emplace_back("resizing>full");
  if (!full_below_limit) out.emplace_back("full<0.05");
  if (!none_above_full) out.emplace_back("none>=full+0.05");
  return out;
}

GapVerdict verify_gap_ordering(const Gaps& g) {
  GapVerdict v;
  v.gaps = g;
  v.inverse_gt_none = g.inverse > g.none;
  v.none_gt_rot_contrast = g.none > g.rot_contrast;
  v.rot_contrast_gt_resizing = g.rot_contrast > g.resizing;
  v.resizing_gt_full = g.resizing > g.full;
  v.full_below_limit = g.full < kFullGapLimit;
  v.none_above_full = g.none >= g.full + kNoneMargin;
  return v;
}

GapVerdict verify_gap_ordering(std::span<const RegimeReport> reports) {
  const auto means = regime_means(reports);
  if (means.size() != kRegimeNames.size()) {
    throw Error(ErrorCode::kInvalidArgument, "gap ordering needs reports for all five regimes");
  }
  Gaps g;
  g.none = means[0].gap;
  g.rot_contrast = means[1].gap;
  g.resizing = means[2].gap;
  g.full = means[3].gap;
  g.inverse = means[4].gap;
  return verify_gap_ordering(g);
}

bool NeutralizationCheck::pass() const {
  return resizing_ks <= kKsShrink * none_ks && full_ks <= kKsShrink * none_ks &&
         resizing_probe <= kProbeChance && full_probe <= kProbeChance &&
         inverse_probe > kProbeChance;
}

std::vector<NeutralizationCheck> check_neutralization(std::span<const RegimeReport> reports) {
  std::vector<NeutralizationCheck> out;
  int max_rep = -1;
  for (const auto& r : reports) max_rep = std::max(max_rep, r.replicate);
  for (int rep = 0; rep <= max_rep; ++rep) {
    const auto* none = find_report(reports, rep, "none");
    const auto* resizing = find_report(reports, rep, "resizing");
    const auto* full = find_report(reports, rep, "full");
    const auto* inverse = find_report(reports, rep, "inverse");
    if (!none || !resizing || !full || !inverse) continue;
    NeutralizationCheck c;
    c.replicate = rep;
    c.none_ks = none->size_stats.ks_statistic;
    c.resizing_ks = resizing->size_stats.ks_statistic;
    c.full_ks = full->size_stats.ks_statistic;
    c.resizing_probe = resizing->size_stats.probe_test_accuracy;
    c.full_probe = full->size_stats.probe_test_accuracy;
    c.inverse_probe = inverse->size_stats.probe_test_accuracy;
    out.push_back(c);
  }
  return out;
}

nlohmann::json report_to_json(const RegimeReport& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : r.history.epochs) {
    history.push_back({{"epoch", e.epoch},
                       {"train_acc", e.train_accuracy},
                       {"val_acc", e.validation_accuracy},
                       {"train_loss", e.train_loss}});
  }
  return {{"regime", r.regime},
          {"replicate", r.replicate},
          {"train_accuracy", r.train_accuracy},
          {"test_accuracy", r.test_accuracy},
          {"gap", r.gap},
          {"history", history},
          {"size_stats", stats_summary_json(r.size_stats)}};
}

nlohmann::json verdict_to_json(const GapVerdict& v, std::span<const NeutralizationCheck> checks) {
  nlohmann::json neutral = nlohmann::json::array();
  bool neutral_pass = !checks.empty();
  for (const auto& c : checks) {
    neutral.push_back({{"replicate", c.replicate},
                       {"none_ks_d", c.none_ks},
                       {"resizing_ks_d", c.resizing_ks},
                       {"full_ks_d", c.full_ks},
                       {"resizing_probe_acc", c.resizing_probe},
                       {"full_probe_acc", c.full_probe},
                       {"inverse_probe_acc", c.inverse_probe},
                       {"pass", c.pass()}});
    neutral_pass = neutral_pass && c.pass();
  }
  return {{"mean_gaps",
           {{"none", v.gaps.none},
            {"rot_contrast", v.gaps.rot_contrast},
            {"resizing", v.gaps.resizing},
            {"full", v.gaps.full},
            {"inverse", v.gaps.inverse}}},
          {"inverse_gt_none", v.inverse_gt_none},
          {"none_gt_rot_contrast", v.none_gt_rot_contrast},
          {"rot_contrast_gt_resizing", v.rot_contrast_gt_resizing},
          {"resizing_gt_full", v.resizing_gt_full},
          {"full_below_0.05", v.full_below_limit},
          {"none_at_least_full_plus_0.05", v.none_above_full},
          {"ordering_pass", v.pass()},
          {"neutralization", neutral},
          {"neutralization_pass", neutral_pass},
          {"pass", v.pass() && neutral_pass}};
}

std::string accuracy_chart_svg(const std::string& title, std::span<const double> train,
                               std::span<const double> validation) {
  constexpr double kW = 480, kH = 320, kLeft = 50, kRight = 20, kTop = 30, kBottom = 40;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  const std::size_t n = std::max(train.size(), validation.size());
  auto points = [&](std::span<const double> ys) {
    std::string s;
    char buf[64];
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double x = kLeft + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
      const double y = kTop + ph * (1.0 - std::clamp(ys[i], 0.0, 1.0));
      std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", i ? " " : "", x, y);
      s += buf;
    }
    return s;
  };
  char head[512];
  std::snprintf(head, sizeof(head),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n",
                kW, kH, kW, kH);
  std::string svg = head;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(static_cast<int>(kW / 2)) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         title + "</text>\n";
  char axes[512];
  std::snprintf(axes, sizeof(axes),
                "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n"
                "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n",
                kLeft, kTop, kLeft, kTop + ph, kLeft, kTop + ph, kLeft + pw, kTop + ph);
  svg += axes;
  svg += "<text x=\"10\" y=\"" + std::to_string(static_cast<int>(kTop + 5)) +
         "\" font-family=\"sans-serif\" font-size=\"10\">1.0</text>\n";
  svg += "<text x=\"10\" y=\"" + std::to_string(static_cast<int>(kTop + ph)) +
         "\" font-family=\"sans-serif\" font-size=\"10\">0.0</text>\n";
  svg += "<text x=\"" + std::to_string(static_cast<int>(kLeft + pw / 2)) + "\" y=\"" +
         std::to_string(static_cast<int>(kH - 10)) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">epoch</text>\n";
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + points(train) +
         "\"><title>train accuracy</title></polyline>\n";
  svg += "<polyline fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"2\" points=\"" +
         points(validation) + "\"><title>validation accuracy</title></polyline>\n";
  svg += "</svg>\n";
  return svg;
}

void emit_report(std::span<const RegimeReport> reports, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());

  std::string csv = "regime,train_accuracy,test_accuracy,gap\n";
  for (const auto& m : regime_means(reports)) {
    csv += m.regime + "," + detail::shortest(m.train_accuracy) + "," +
           detail::shortest(m.test_accuracy) + "," + detail::shortest(m.gap) + "\n";
  }
  write_text(out_dir / "table_iv.csv", csv);

  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) all.push_back(report_to_json(r));
  write_text(out_dir / "table_iv.json", all.dump(2) + "\n");

  const auto checks = check_neutralization(reports);
  const GapVerdict verdict = verify_gap_ordering(reports);
  write_text(out_dir / "verdict.json", verdict_to_json(verdict, checks).dump(2) + "\n");

  for (auto name : kRegimeNames) {
    std::vector<double> train_curve;
    std::vector<double> val_curve;
    std::vector<double> loss_curve;
    int count = 0;
    for (const auto& r : reports) {
      if (r.regime != name) continue;
      const auto& ep = r.history.epochs;
      train_curve.resize(std::max(train_curve.size(), ep.size()), 0.0);
      val_curve.resize(train_curve.size(), 0.0);
      loss_curve.resize(train_curve.size(), 0.0);
      for (std::size_t i = 0; i < ep.size(); ++i) {
        train_curve[i] += ep[i].train_accuracy;
        val_curve[i] += ep[i].validation_accuracy;
        loss_curve[i] += ep[i].train_loss;
      }
      ++count;
    }
    if (count == 0) continue;
    std::string curve = "epoch,train_acc,val_acc,train_loss\n";
    for (std::size_t i = 0; i < train_curve.size(); ++i) {
      train_curve[i] /= count;
      val_curve[i] /= count;
      loss_curve[i] /= count;
      curve += std::to_string(i) + "," + detail::shortest(train_curve[i]) + "," +
               detail::shortest(val_curve[i]) + "," + detail::shortest(loss_curve[i]) + "\n";
    }
    const std::string stem = "curves_" + std::string(name);
    write_text(out_dir / (stem + ".csv"), curve);
    write_text(out_dir / (stem + ".svg"),
               accuracy_chart_svg(std::string(name) + ": train / validation accuracy", train_curve,
                                  val_curve));
  }
}

std::span<const ReferenceRow> table3_reference() {
  static constexpr ReferenceRow kRows[] = {
      {"Input", "224, 224, 3", 0},
      {"Conv2D", "224, 224, 64", 1792},
      {"Conv2D", "224, 224, 64", 36928},
      {"MaxPooling2D", "112, 112, 64", 0},
      {"Conv2D", "112, 112, 128", 73856},
      {"Conv2D", "112, 112, 128", 147584},
      {"MaxPooling2D", "56, 56, 128", 0},
      {"Conv2D", "56, 56, 256", 295168},
      {"Conv2D", "56, 56, 256", 590080},
      {"Conv2D", "56, 56, 256", 590080},
      {"Conv2D", "56, 56, 256", 590080},
      {"MaxPooling2D", "28, 28, 256", 0},
      {"Conv2D", "28, 28, 512", 1180160},
      {"Conv2D", "28, 28, 512", 2359808},
      {"Conv2D", "28, 28, 512", 2359808},
      {"Conv2D", "28, 28, 512", 2359808},
      {"MaxPooling2D", "14, 14, 512", 0},
      {"Conv2D", "14, 14, 512", 2359808},
      {"Conv2D", "14, 14, 512", 2359808},
      {"Conv2D", "14, 14, 512", 2359808},
      {"Conv2D", "14, 14, 512", 2359808},
      {"MaxPooling2D", "7, 7, 512", 0},
      {"Flatten", "25088", 0},
      {"Dense (ReLU)", "256", 6422784},
      {"Dropout", "256", 0},
      {"Dense (ReLU)", "128", 32896},
      {"Dropout", "128", 0},
      {"Dense (ReLU)", "64", 8256},
      {"Dropout", "64", 0},
      {"Dense (SoftMax)", "2", 130},
  };
  return kRows;
}

}  // namespace sizeaug
