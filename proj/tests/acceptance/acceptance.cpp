/*
 * SPDX-License-Identifier: Apache-2.0
 */
// Acceptance runner: one PASS/FAIL line per criterion, tolerances pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <limits>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sizeaug/augment.hpp"
#include "sizeaug/cli.hpp"
#include "sizeaug/harness.hpp"
#include "sizeaug/metrics.hpp"
#include "sizeaug/model.hpp"
#include "sizeaug/synth.hpp"
#include "sizeaug/train.hpp"

namespace fs = std::filesystem;
using namespace sizeaug;

namespace {

// Tolerances.
constexpr double kTable3Budget = 1.0;           // s
constexpr double kTransformBudget = 5.0;        // s
constexpr double kMeanTolerance = 1e-9;
constexpr double kDeterminismBudget = 120.0;    // s
constexpr double kGradTolerance = 1e-4;
constexpr int kGradParams = 200;
constexpr double kGradBudget = 30.0;            // s
constexpr double kKsPValueMax = 0.01;
constexpr double kProbeBeforeMin = 0.75;
constexpr double kKsRatioMax = 0.5;
constexpr double kProbeAfterMax = 0.60;
constexpr double kNeutralBudget = 60.0;         // s
constexpr double kOracleBudget = 30.0;          // s
constexpr double kDiameterTolerance = 1.0;      // px
constexpr int kOverfitEpochs = 60;
constexpr double kOverfitGapMin = 0.15;
constexpr double kOverfitBudget = 120.0;        // s

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "sizeaug");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (code != kExitOk && code != kExitVerificationFailed) std::cerr << err.str();
  return code;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path plus contents of every file, in sorted order.
std::string tree_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    all += fs::relative(f, dir).string();
    all += '\0';
    all += read_bytes(f);
  }
  return all;
}

fs::path fresh(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImageBuffer random_image(int w, int h, std::uint64_t seed) {
  Rng rng(RngState{seed});
  std::vector<double> data(static_cast<std::size_t>(w) * h * 3);
  for (auto& v : data) v = rng.unit();
  return ImageBuffer(w, h, std::move(data));
}

// 1. Table III.
Outcome table3(const fs::path&) {
  const auto t0 = Clock::now();
  std::string text;
  const int code = cli({"param-table", "--preset", "vgg19", "--check-table3"}, &text);
  const auto rows = validate_config(vgg19_table3_config());
  const auto ref = table3_reference();
  int mismatches = 0;
  std::int64_t total = 0, column_sum = 0;
  for (std::size_t i = 0; i < std::min(rows.size(), ref.size()); ++i) {
    if (rows[i].params != ref[i].params || rows[i].output.to_string() != ref[i].output) ++mismatches;
    total += rows[i].params;
    column_sum += ref[i].params;
  }
  const double dt = seconds_since(t0);
  const bool ok = code == kExitOk && rows.size() == ref.size() && mismatches == 0 &&
                  total == column_sum && dt < kTable3Budget;
  return {ok, "rows=" + std::to_string(rows.size()) + " mismatches=" + std::to_string(mismatches) +
                  " total=" + std::to_string(total) + " column_sum=" + std::to_string(column_sum) +
                  " cli_exit=" + std::to_string(code) + " time=" + fmt(dt, 3) + "s (<" +
                  fmt(kTable3Budget) + "s)"};
}

// 2. Transform identities and symmetries.
Outcome transforms(const fs::path&) {
  const auto t0 = Clock::now();
  int failures = 0;
  double worst_mean = 0.0;
  Rng rng(RngState{2024});
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 5 + static_cast<int>(rng.below(40));
    const int h = 5 + static_cast<int>(rng.below(40));
    const ImageBuffer img = random_image(w, h, 1000 + trial);
    if (!(rotate(img, 0.0) == img)) ++failures;
    if (!(adjust_contrast(img, 0.0) == img)) ++failures;
    if (!(zoom(img, 0.0) == img)) ++failures;
    if (!(rotate(rotate(img, 0.5), 0.5) == img)) ++failures;

    const ImageBuffer sq = random_image(w, w, 2000 + trial);
    const ImageBuffer q = rotate(sq, 0.25);
    for (int y = 0; y < w; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          if (q.at(x, y, c) != sq.at(y, w - 1 - x, c)) {
            ++failures;
            y = x = w;
            c = 3;
          }

    ImageBuffer mid(w, h);
    for (double& v : mid.data()) v = 0.3 + 0.4 * rng.unit();
    const double f = rng.uniform(-0.5, 0.5);
    const ImageBuffer out = adjust_contrast(mid, f);
    for (int c = 0; c < 3; ++c) {
      double a = 0.0, b = 0.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          a += mid.at(x, y, c);
          b += out.at(x, y, c);
        }
      worst_mean = std::max(worst_mean, std::abs(a - b) / (static_cast<double>(w) * h));
    }
  }
  const double dt = seconds_since(t0);
  const bool ok = failures == 0 && worst_mean < kMeanTolerance && dt < kTransformBudget;
  return {ok, "exactness_failures=" + std::to_string(failures) + " max_mean_shift=" +
                  fmt(worst_mean, 3) + " (<" + fmt(kMeanTolerance) + ") time=" + fmt(dt, 3) + "s (<" +
                  fmt(kTransformBudget) + "s)"};
}

// 3. Determinism of synth, augment, train and experiment.
Outcome determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path root = fresh(work / "determinism");
  {
    std::ofstream cfg(root / "cfg.json");
    cfg << R"({"synth": {"split_counts": {"train": 40, "validation": 10, "test": 20}},)"
        << R"( "train": {"epochs": 2}, "replicates": 1, "stats_limit": 20})";
  }
  const std::string cfg = (root / "cfg.json").string();
  std::vector<std::string> digests[2];
  int bad_exit = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path d = root / ("run" + std::to_string(run));
    const std::string manifest = (d / "data" / "manifest.csv").string();
    bad_exit += cli({"synth", "--seed", "7", "--config", cfg, "--out", (d / "data").string()}) != 0;
    bad_exit += cli({"augment", "--seed", "7", "--manifest", manifest, "--policy", "table1",
                     "--workers", "1", "--out", (d / "aug1").string()}) != 0;
    bad_exit += cli({"augment", "--seed", "7", "--manifest", manifest, "--policy", "table1",
                     "--workers", "4", "--out", (d / "aug4").string()}) != 0;
    bad_exit += cli({"train", "--seed", "7", "--config", cfg, "--manifest", manifest, "--policy",
                     "table1", "--out", (d / "train").string()}) != 0;
    const int ex = cli({"experiment", "--seed", "7", "--config", cfg, "--out", (d / "exp").string()});
    bad_exit += ex != kExitOk && ex != kExitVerificationFailed;
    for (const char* sub : {"data", "aug1", "train", "exp"}) digests[run].push_back(tree_digest(d / sub));
    digests[run].push_back(tree_digest(d / "aug4"));
  }
  const char* names[] = {"synth", "augment", "train", "experiment"};
  std::string diff;
  for (int i = 0; i < 4; ++i)
    if (digests[0][i] != digests[1][i]) diff += std::string(diff.empty() ? "" : ",") + names[i];
  const bool workers_same = digests[0][1] == digests[0][4];
  const double dt = seconds_since(t0);
  const bool ok = bad_exit == 0 && diff.empty() && workers_same && dt < kDeterminismBudget;
  return {ok, "differing=[" + diff + "] workers_1_vs_4_identical=" + (workers_same ? "yes" : "no") +
                  " bad_exits=" + std::to_string(bad_exit) + " time=" + fmt(dt, 3) + "s (<" +
                  fmt(kDeterminismBudget) + "s)"};
}

// 4. Gradient check on the micro model.
Outcome gradients(const fs::path&) {
  const auto t0 = Clock::now();
  const Model model = init_model(micro_default_config(), 42);
  std::vector<ImageBuffer> batch;
  std::vector<Label> labels;
  for (int i = 0; i < 4; ++i) {
    batch.push_back(random_image(64, 64, 77 + i));
    labels.push_back(i % 2 ? Label::kMalignant : Label::kBenign);
  }
  const GradCheckReport r = grad_check_report(model, batch, labels, kGradParams, 42);
  const double dt = seconds_since(t0);
  const bool ok = r.checked >= kGradParams && r.max_relative_error < kGradTolerance && dt < kGradBudget;
  return {ok, "checked=" + std::to_string(r.checked) + " kink_redraws=" + std::to_string(r.skipped_kinks) +
                  " max_rel_err=" + fmt(r.max_relative_error, 3) + " (<" + fmt(kGradTolerance) +
                  ") time=" + fmt(dt, 3) + "s (<" + fmt(kGradBudget) + "s)"};
}

// 5. Size neutralization under the Table I policy.
Outcome neutralization(const fs::path&) {
  const auto t0 = Clock::now();
  SynthConfig sc;
  const DatasetManifest data = generate_samples(sc, 42);
  const std::vector<Sample> train = data.split(Split::kTrain);
  const LesionStats before = class_size_stats(train, data, 300);
  std::vector<Sample> zoomed;
  for (const auto& s : train) {
    Sample z = s;
    z.image = std::make_shared<const ImageBuffer>(
        apply_augmentation(*s.image, s, train_table1_policy(), 42, 0));
    zoomed.push_back(std::move(z));
  }
  const LesionStats after = class_size_stats(zoomed, data, 300);
  const double ratio = after.ks_statistic / before.ks_statistic;
  const double dt = seconds_since(t0);
  const bool ok = before.ks_pvalue < kKsPValueMax && before.probe_test_accuracy >= kProbeBeforeMin &&
                  ratio <= kKsRatioMax && after.probe_test_accuracy <= kProbeAfterMax &&
                  dt < kNeutralBudget;
  return {ok, "before: D=" + fmt(before.ks_statistic) + " p=" + fmt(before.ks_pvalue, 3) + " (<" +
                  fmt(kKsPValueMax) + ") probe=" + fmt(before.probe_test_accuracy) + " (>=" +
                  fmt(kProbeBeforeMin) + "); after: D=" + fmt(after.ks_statistic) + " ratio=" +
                  fmt(ratio) + " (<=" + fmt(kKsRatioMax) + ") probe=" + fmt(after.probe_test_accuracy) +
                  " (<=" + fmt(kProbeAfterMax) + ") time=" + fmt(dt, 3) + "s (<" + fmt(kNeutralBudget) + "s)"};
}

// 6. Gap ordering over the five regimes.
Outcome gap_ordering(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path out = fresh(work / "experiment");
  std::string text;
  const int code = cli({"experiment", "--seed", "42", "--out", out.string()}, &text);
  const double dt = seconds_since(t0);
  std::string detail = "cli_exit=" + std::to_string(code);
  bool ok = false;
  try {
    const auto v = nlohmann::json::parse(read_bytes(out / "verdict.json"));
    const auto& g = v.at("mean_gaps");
    ok = v.at("ordering_pass").get<bool>() && v.at("full_below_0.05").get<bool>() &&
         v.at("none_at_least_full_plus_0.05").get<bool>();
    detail += " gaps: inverse=" + fmt(g.at("inverse").get<double>(), 3) +
              " none=" + fmt(g.at("none").get<double>(), 3) +
              " rot_contrast=" + fmt(g.at("rot_contrast").get<double>(), 3) +
              " resizing=" + fmt(g.at("resizing").get<double>(), 3) +
              " full=" + fmt(g.at("full").get<double>(), 3) + " (full<0.05, none>=full+0.05)";
    std::string failed;
    for (const char* k : {"inverse_gt_none", "none_gt_rot_contrast", "rot_contrast_gt_resizing",
                          "resizing_gt_full"})
      if (!v.at(k).get<bool>()) failed += std::string(failed.empty() ? "" : ",") + k;
    if (!failed.empty()) detail += " failed=[" + failed + "]";
  } catch (const std::exception& e) {
    detail += std::string(" verdict unreadable: ") + e.what();
  }
  detail += " time=" + fmt(dt, 4) + "s (target <900s)";
  return {ok, detail};
}

// 7. Oracle equivalences for KS, probe fitting and disk diameters.
double brute_force_ks(const std::vector<double>& a, const std::vector<double>& b) {
  auto cdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [x](double v) { return v <= x; })) /
           static_cast<double>(s.size());
  };
  double d = 0.0;
  for (const auto* s : {&a, &b})
    for (double x : *s) d = std::max(d, std::abs(cdf(a, x) - cdf(b, x)));
  return d;
}

double exhaustive_probe(const std::vector<LabeledDiameter>& data) {
  std::set<double> xs;
  for (const auto& d : data) xs.insert(d.diameter);
  std::vector<double> cands = {-std::numeric_limits<double>::infinity(),
                               std::numeric_limits<double>::infinity()};
  for (auto it = xs.begin(); std::next(it) != xs.end(); ++it) cands.push_back((*it + *std::next(it)) / 2);
  double best = 0.0;
  for (double t : cands)
    for (Polarity p : {Polarity::kMalignantAbove, Polarity::kMalignantBelow})
      best = std::max(best, eval_size_probe(SizeProbe{t, p}, data));
  return best;
}

Outcome oracles(const fs::path&) {
  const auto t0 = Clock::now();
  Rng rng(RngState{7007});
  int ks_bad = 0, probe_bad = 0, disk_bad = 0;
  double worst_disk = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(5 + rng.below(25)), b(5 + rng.below(25));
    for (double& v : a) v = std::round(rng.uniform(0, 20)) / 2;
    for (double& v : b) v = std::round(rng.uniform(2, 24)) / 2;
    if (std::abs(ks_two_sample(a, b).statistic - brute_force_ks(a, b)) > 1e-12) ++ks_bad;

    std::vector<LabeledDiameter> d;
    for (int i = 0; i < 4 + static_cast<int>(rng.below(40)); ++i) {
      const Label l = i % 2 ? Label::kMalignant : Label::kBenign;
      d.push_back({std::round(rng.uniform(0, 30)) + (l == Label::kMalignant ? 3 : 0), l});
    }
    if (std::abs(eval_size_probe(fit_size_probe(d), d) - exhaustive_probe(d)) > 1e-12) ++probe_bad;
  }
  for (int r = 5; r <= 28; ++r) {
    ImageBuffer img = ImageBuffer::filled(64, 64, 0.86, 0.68, 0.58);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (std::hypot(x - 31.5, y - 31.5) <= r)
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.3;
    const double err = std::abs(equivalent_diameter(segment_lesion(img)) - 2.0 * r);
    worst_disk = std::max(worst_disk, err);
    if (err > kDiameterTolerance) ++disk_bad;
  }
  const double dt = seconds_since(t0);
  const bool ok = ks_bad == 0 && probe_bad == 0 && disk_bad == 0 && dt < kOracleBudget;
  return {ok, "ks_mismatch=" + std::to_string(ks_bad) + "/100 probe_mismatch=" + std::to_string(probe_bad) +
                  "/100 disk_max_err=" + fmt(worst_disk, 3) + "px (<=" + fmt(kDiameterTolerance) +
                  ") time=" + fmt(dt, 3) + "s (<" + fmt(kOracleBudget) + "s)"};
}

// 8. Eight clean samples memorized; the test policy exposes the gap.
Outcome overfit(const fs::path&) {
  const auto t0 = Clock::now();
  SynthConfig sc;
  sc.split_counts = {8, 0, 200};
  const DatasetManifest data = generate_samples(sc, 42);
  TrainConfig tc;
  tc.epochs = kOverfitEpochs;
  tc.seed = 42;
  const TrainResult r = train(micro_default_config(), data, tc, AugmentationPolicy{});
  const double train_acc = evaluate(r.model, data, Split::kTrain, std::nullopt, 42);
  const double test_acc = evaluate(r.model, data, Split::kTest, test_table2_policy(), 42);
  const double dt = seconds_since(t0);
  const bool ok = train_acc == 1.0 && train_acc - test_acc >= kOverfitGapMin && dt < kOverfitBudget;
  return {ok, "train_acc=" + fmt(train_acc) + " (==1 after " + std::to_string(kOverfitEpochs) +
                  " epochs) table2_test_acc=" + fmt(test_acc) + " gap=" + fmt(train_acc - test_acc) +
                  " (>=" + fmt(kOverfitGapMin) + ") time=" + fmt(dt, 3) + "s (<" +
                  fmt(kOverfitBudget) + "s)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const fs::path&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "sizeaug_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: sizeaug_acceptance [--work-dir DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<Criterion> criteria = {
      {1, "table3-reproduction", table3},
      {2, "transform-identities", transforms},
      {3, "determinism", determinism},
      {4, "gradient-check", gradients},
      {5, "size-neutralization", neutralization},
      {6, "gap-ordering", gap_ordering},
      {7, "oracle-equivalence", oracles},
      {8, "overfit-sanity", overfit},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run(work);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
