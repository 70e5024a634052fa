/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sizeaug/augment.hpp"
#include "sizeaug/error.hpp"
#include "sizeaug/harness.hpp"
#include "sizeaug/manifest.hpp"
#include "sizeaug/metrics.hpp"
#include "sizeaug/model.hpp"
#include "sizeaug/synth.hpp"
#include "sizeaug/train.hpp"

namespace sizeaug {

namespace {

constexpr double kGradTolerance = 1e-4;

struct Globals {
  std::uint64_t seed = 42;
  std::string config;
  std::string out;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

std::filesystem::path out_dir(const Globals& g, const char* fallback) {
  std::filesystem::path dir = g.out.empty() ? fallback : g.out;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

// A --config document may be a bare model config or hold one under "model".
ModelConfig model_from(const Globals& g, const std::string& preset) {
  if (!g.config.empty()) {
    const auto j = read_json(g.config);
    if (j.contains("model")) return model_config_from_json(j.at("model"));
    if (j.contains("layers") || j.contains("preset")) return model_config_from_json(j);
  }
  return model_preset(preset);
}

TrainConfig train_from(const Globals& g) {
  TrainConfig tc;
  if (!g.config.empty()) {
    const auto j = read_json(g.config);
    if (j.contains("train")) tc = train_config_from_json(j.at("train"));
  }
  tc.seed = g.seed;
  return tc;
}

int cmd_synth(const Globals& g, bool paper_counts, std::ostream& out) {
  SynthConfig config = paper_counts ? paper_synth_config() : SynthConfig{};
  if (!g.config.empty()) {
    const auto j = read_json(g.config);
    config = synth_config_from_json(j.contains("synth") ? j.at("synth") : j);
  }
  const auto dir = out_dir(g, "synth_out");
  const DatasetManifest m = generate_dataset(config, g.seed, dir);
  write_file(dir / "synth_config.json", synth_config_to_json(config).dump(2) + "\n");
  out << "wrote " << m.records().size() << " samples to " << (dir / "manifest.csv").string() << "\n";
  return kExitOk;
}

int cmd_augment(const Globals& g, const std::string& manifest, const std::string& policy,
                std::int64_t epoch, int workers, std::ostream& out) {
  const DatasetManifest m = load_manifest(manifest);
  const AugmentationPolicy p = load_policy(policy);
  const auto dir = out_dir(g, "augment_out");
  const DatasetManifest result = augment_dataset(m, p, g.seed, epoch, dir, workers);
  save_manifest(result, dir / "manifest.csv");
  out << "wrote " << result.records().size() << " augmented samples to "
      << (dir / "manifest.csv").string() << "\n";
  return kExitOk;
}

int cmd_stats(const Globals& g, const std::string& manifest, const std::string& split,
              const std::string& policy, std::int64_t epoch, int limit, double threshold,
              std::ostream& out) {
  const DatasetManifest m = load_manifest(manifest);
  std::vector<Sample> samples = split == "all" ? m.records() : m.split(parse_split(split));
  const AugmentationPolicy p = load_policy(policy);
  if (!p.empty()) {
    for (auto& s : samples) {
      s.image = std::make_shared<const ImageBuffer>(
          apply_augmentation(m.load_image(s), s, p, g.seed, epoch));
    }
  }
  const LesionStats stats = class_size_stats(samples, m, limit, threshold);
  nlohmann::json j = stats_summary_json(stats);
  j["probe_polarity"] = stats.probe.polarity == Polarity::kMalignantAbove ? "malignant_above"
                                                                           : "malignant_below";
  j["probe_threshold"] = stats.probe.threshold;
  j["benign_count"] = stats.benign_diameters.size();
  j["malignant_count"] = stats.malignant_diameters.size();
  out << j.dump(2) << "\n";
  if (!g.out.empty()) write_file(out_dir(g, "") / "stats.json", j.dump(2) + "\n");
  return kExitOk;
}

int cmd_param_table(const Globals& g, const std::string& preset, bool check, std::ostream& out,
                    std::ostream& err) {
  const ModelConfig config = model_from(g, preset);
  const auto rows = validate_config(config);
  std::int64_t total = 0;
  out << std::left << std::setw(18) << "Layer Type" << std::setw(18) << "Output Shape"
      << "Parameters\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& spec = config.layers[i];
    std::string name(to_string(spec.kind));
    if (spec.kind == LayerKind::kDense) {
      name += spec.activation == Activation::kSoftmax ? " (SoftMax)" : " (ReLU)";
    }
    out << std::setw(18) << name << std::setw(18) << rows[i].output.to_string() << rows[i].params
        << "\n";
    total += rows[i].params;
  }
  out << "Total parameters: " << total << "\n";
  if (!check) return kExitOk;

  const auto ref = table3_reference();
  std::int64_t ref_total = 0;
  for (const auto& r : ref) ref_total += r.params;
  int mismatches = 0;
  if (rows.size() != ref.size()) {
    err << "row count " << rows.size() << " differs from reference " << ref.size() << "\n";
    ++mismatches;
  }
  for (std::size_t i = 0; i < std::min(rows.size(), ref.size()); ++i) {
    const std::string shape = rows[i].output.to_string();
    if (shape != ref[i].output || rows[i].params != ref[i].params) {
      err << "row " << i << ": got (" << shape << ", " << rows[i].params << "), expected ("
          << ref[i].output << ", " << ref[i].params << ")\n";
      ++mismatches;
    }
  }
  if (total != ref_total) {
    err << "total " << total << " differs from reference column sum " << ref_total << "\n";
    ++mismatches;
  }
  out << (mismatches == 0 ? "table check: PASS" : "table check: FAIL") << " (" << ref.size()
      << " reference rows, column sum " << ref_total << ")\n";
  return mismatches == 0 ? kExitOk : kExitVerificationFailed;
}

int cmd_gradcheck(const Globals& g, const std::string& preset, int batch_size, int params,
                  std::ostream& out) {
  const ModelConfig config = model_from(g, preset);
  const Model model = init_model(config, g.seed);
  const Shape in = model.shapes.front();
  Rng rng(derive_stream(g.seed, "gradcheck", 0, "synth"));
  std::vector<ImageBuffer> batch;
  std::vector<Label> labels;
  for (int i = 0; i < batch_size; ++i) {
    ImageBuffer img(in.width, in.height);
    for (auto& v : img.data()) v = rng.unit();
    batch.push_back(std::move(img));
    labels.push_back(i % 2 == 0 ? Label::kBenign : Label::kMalignant);
  }
  const GradCheckReport r = grad_check_report(model, batch, labels, params, g.seed);
  const bool ok = r.max_relative_error < kGradTolerance && r.checked >= params;
  out << "max relative error " << r.max_relative_error << " over " << r.checked
      << " parameters (" << r.skipped_kinks << " kink draws redrawn): " << (ok ? "PASS" : "FAIL")
      << "\n";
  return ok ? kExitOk : kExitVerificationFailed;
}

int cmd_train(const Globals& g, const std::string& manifest, const std::string& preset,
              const std::string& policy, std::ostream& out, std::ostream& err) {
  const DatasetManifest m = load_manifest(manifest);
  const ModelConfig config = model_from(g, preset);
  const TrainConfig tc = train_from(g);
  const AugmentationPolicy p = load_policy(policy);
  const auto dir = out_dir(g, "train_out");
  const TrainResult r = train(config, m, tc, p, [&](const EpochRecord& e) {
    err << "epoch " << e.epoch << " loss " << e.train_loss << " train " << e.train_accuracy
        << " val " << e.validation_accuracy << "\n";
  });
  save_model(r.model, dir / "model.bin");
  write_file(dir / "history.csv", r.history.to_csv());
  write_file(dir / "model_config.json", model_config_to_json(config).dump(2) + "\n");
  write_file(dir / "train_config.json", train_config_to_json(tc).dump(2) + "\n");
  out << "wrote " << (dir / "model.bin").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& manifest, const std::string& model_path,
             const std::string& preset, const std::string& split, const std::string& policy,
             std::ostream& out) {
  const DatasetManifest m = load_manifest(manifest);
  const Model model = load_model(model_from(g, preset), model_path);
  std::optional<AugmentationPolicy> p;
  if (policy != "none") p = load_policy(policy);
  const double acc = evaluate(model, m, parse_split(split), p, g.seed);
  const nlohmann::json j{{"split", split}, {"policy", policy}, {"accuracy", acc}};
  out << j.dump(2) << "\n";
  if (!g.out.empty()) write_file(out_dir(g, "") / "eval.json", j.dump(2) + "\n");
  return kExitOk;
}

int cmd_experiment(const Globals& g, int replicates, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  if (!g.config.empty()) config = experiment_config_from_json(read_json(g.config));
  config.master_seed = g.seed;
  if (replicates > 0) config.replicates = replicates;
  const auto dir = out_dir(g, "experiment_out");
  const auto reports = run_table_iv(config, [&](const RegimeReport& r) {
    err << "replicate " << r.replicate << " " << r.regime << ": train " << r.train_accuracy
        << " test " << r.test_accuracy << " gap " << r.gap << "\n";
  });
  write_file(dir / "experiment_config.json", experiment_config_to_json(config).dump(2) + "\n");
  emit_report(reports, dir);

  const GapVerdict verdict = verify_gap_ordering(reports);
  const auto checks = check_neutralization(reports);
  bool neutral = !checks.empty();
  for (const auto& c : checks) neutral = neutral && c.pass();
  out << std::left << std::setw(14) << "regime" << std::setw(10) << "train" << std::setw(10)
      << "test" << "gap\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& m : regime_means(reports)) {
    out << std::setw(14) << m.regime << std::setw(10) << m.train_accuracy << std::setw(10)
        << m.test_accuracy << m.gap << "\n";
  }
  out << "gap ordering: " << (verdict.pass() ? "PASS" : "FAIL");
  for (const auto& v : verdict.violations()) out << " [" << v << "]";
  out << "\nsize neutralization: " << (neutral ? "PASS" : "FAIL") << "\n";
  return verdict.pass() && neutral ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-conditional size augmentation experiments on synthetic lesion images",
               "sizeaug"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed for every random stream")->capture_default_str();
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--out", g.out, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic lesion dataset");
  bool paper_counts = false;
  synth->add_flag("--paper-counts", paper_counts, "Use the 1686/210/213 split sizes");

  auto* augment = app.add_subcommand("augment", "Apply an augmentation policy to a manifest");
  std::string aug_manifest;
  std::string aug_policy = "table1";
  std::int64_t aug_epoch = 0;
  int workers = 1;
  augment->add_option("--manifest", aug_manifest, "Input manifest.csv")->required();
  augment->add_option("--policy", aug_policy, "table1, inverse, table2, none or a JSON file")
      ->capture_default_str();
  augment->add_option("--epoch", aug_epoch, "Epoch index in the stream key")->capture_default_str();
  augment->add_option("--workers", workers, "Worker threads")->capture_default_str();

  auto* stats = app.add_subcommand("stats", "Lesion size distribution, KS test and size probe");
  std::string st_manifest;
  std::string st_split = "train";
  std::string st_policy = "none";
  std::int64_t st_epoch = 0;
  int st_limit = 1000;
  double st_threshold = kDefaultSegmentThreshold;
  stats->add_option("--manifest", st_manifest, "Input manifest.csv")->required();
  stats->add_option("--split", st_split, "train, validation, test or all")->capture_default_str();
  stats->add_option("--policy", st_policy, "Augment in memory before measuring")
      ->capture_default_str();
  stats->add_option("--epoch", st_epoch, "Epoch index for --policy")->capture_default_str();
  stats->add_option("--limit", st_limit, "Lesions measured per class")->capture_default_str();
  stats->add_option("--threshold", st_threshold, "Segmentation color distance")
      ->capture_default_str();

  auto* params = app.add_subcommand("param-table", "Print output shapes and parameter counts");
  std::string pt_preset = "vgg19";
  bool check = false;
  params->add_option("--preset", pt_preset, "vgg19 or micro")->capture_default_str();
  params->add_flag("--check-table3", check, "Compare against the embedded VGG19 reference rows");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::string gc_preset = "micro";
  int gc_batch = 4;
  int gc_params = 200;
  gradcheck->add_option("--preset", gc_preset, "vgg19 or micro")->capture_default_str();
  gradcheck->add_option("--batch", gc_batch, "Random images in the batch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gradcheck->add_option("--params", gc_params, "Parameters to probe")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* trainc = app.add_subcommand("train", "Train a model on a manifest");
  std::string tr_manifest;
  std::string tr_preset = "micro";
  std::string tr_policy = "none";
  trainc->add_option("--manifest", tr_manifest, "Input manifest.csv")->required();
  trainc->add_option("--preset", tr_preset, "Model preset when --config has no model")
      ->capture_default_str();
  trainc->add_option("--policy", tr_policy, "Training augmentation policy")->capture_default_str();

  auto* evalc = app.add_subcommand("eval", "Evaluate a trained model");
  std::string ev_manifest;
  std::string ev_model;
  std::string ev_preset = "micro";
  std::string ev_split = "test";
  std::string ev_policy = "table2";
  evalc->add_option("--manifest", ev_manifest, "Input manifest.csv")->required();
  evalc->add_option("--model", ev_model, "model.bin written by train")->required();
  evalc->add_option("--preset", ev_preset, "Model preset when --config has no model")
      ->capture_default_str();
  evalc->add_option("--split", ev_split, "train, validation or test")->capture_default_str();
  evalc->add_option("--policy", ev_policy, "Test-time policy or none")->capture_default_str();

  auto* experiment = app.add_subcommand("experiment", "Run all five training regimes and verify");
  int replicates = 0;
  experiment->add_option("--replicates", replicates, "Override the replicate count");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, paper_counts, out);
    if (*augment) return cmd_augment(g, aug_manifest, aug_policy, aug_epoch, workers, out);
    if (*stats) {
      return cmd_stats(g, st_manifest, st_split, st_policy, st_epoch, st_limit, st_threshold, out);
    }
    if (*params) return cmd_param_table(g, pt_preset, check, out, err);
    if (*gradcheck) return cmd_gradcheck(g, gc_preset, gc_batch, gc_params, out);
    if (*trainc) return cmd_train(g, tr_manifest, tr_preset, tr_policy, out, err);
    if (*evalc) return cmd_eval(g, ev_manifest, ev_model, ev_preset, ev_split, ev_policy, out);
    if (*experiment) return cmd_experiment(g, replicates, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace sizeaug
