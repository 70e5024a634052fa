/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sizeaug/error.hpp"

namespace sizeaug {

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (image_size < 8) fail("image_size must be at least 8");
  if (!(malignant_diameter_mean > 0.0)) fail("malignant_diameter_mean must be positive");
  if (!(benign_diameter_ratio > 0.0 && benign_diameter_ratio <= 1.0)) {
    fail("benign_diameter_ratio must lie in (0, 1]");
  }
  if (!(diameter_std >= 0.0)) fail("diameter_std must be non-negative");
  // Four harmonics: amplitude bound below 1/4 keeps r(theta) > 0.
  for (double irr : {benign_irregularity, malignant_irregularity}) {
    if (!(irr >= 0.0 && irr < 0.25)) fail("irregularity must lie in [0, 0.25)");
  }
  if (!(noise_std >= 0.0) || !(lesion_color_jitter >= 0.0)) fail("noise std must be non-negative");
  if (!(center_jitter >= 0.0 && center_jitter <= 0.25)) fail("center_jitter must lie in [0, 0.25]");
  for (const Rgb* c : {&lesion_color, &skin_color}) {
    for (double v : *c) {
      if (!(v >= 0.0 && v <= 1.0)) fail("colors must lie in [0, 1]");
    }
  }
  if (split_counts.train < 0 || split_counts.validation < 0 || split_counts.test < 0) {
    fail("split counts must be non-negative");
  }
}

SynthConfig paper_synth_config() {
  SynthConfig c;
  c.split_counts = SplitCounts{1686, 210, 213};
  return c;
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
  return {
      {"image_size", c.image_size},
      {"malignant_diameter_mean", c.malignant_diameter_mean},
      {"benign_diameter_ratio", c.benign_diameter_ratio},
      {"diameter_std", c.diameter_std},
      {"irregularity", {{"benign", c.benign_irregularity}, {"malignant", c.malignant_irregularity}}},
      {"lesion_color", c.lesion_color},
      {"skin_color", c.skin_color},
      {"color_shift", {{"benign", c.benign_color_shift}, {"malignant", c.malignant_color_shift}}},
      {"lesion_color_jitter", c.lesion_color_jitter},
      {"noise_std", c.noise_std},
      {"center_jitter", c.center_jitter},
      {"split_counts",
       {{"train", c.split_counts.train},
        {"validation", c.split_counts.validation},
        {"test", c.split_counts.test}}},
  };
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  if (j.contains("preset")) {
    if (j.at("preset") == "paper") {
      c = paper_synth_config();
    } else if (j.at("preset") != "default") {
      throw Error(ErrorCode::kInvalidArgument, "unknown synth preset");
    }
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("image_size", c.image_size);
    get("malignant_diameter_mean", c.malignant_diameter_mean);
    get("benign_diameter_ratio", c.benign_diameter_ratio);
    get("diameter_std", c.diameter_std);
    get("lesion_color", c.lesion_color);
    get("skin_color", c.skin_color);
    get("lesion_color_jitter", c.lesion_color_jitter);
    get("noise_std", c.noise_std);
    get("center_jitter", c.center_jitter);
    if (j.contains("irregularity")) {
      const auto& irr = j.at("irregularity");
      if (irr.contains("benign")) irr.at("benign").get_to(c.benign_irregularity);
      if (irr.contains("malignant")) irr.at("malignant").get_to(c.malignant_irregularity);
    }
    if (j.contains("color_shift")) {
      const auto& cs = j.at("color_shift");
      if (cs.contains("benign")) cs.at("benign").get_to(c.benign_color_shift);
      if (cs.contains("malignant")) cs.at("malignant").get_to(c.malignant_color_shift);
    }
    if (j.contains("split_counts")) {
      const auto& sc = j.at("split_counts");
      if (sc.contains("train")) sc.at("train").get_to(c.split_counts.train);
      if (sc.contains("validation")) sc.at("validation").get_to(c.split_counts.validation);
      if (sc.contains("test")) sc.at("test").get_to(c.split_counts.test);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

double RadialProfile::operator()(double theta) const {
  double s = 1.0;
  for (int k = 0; k < 4; ++k) s += amplitudes[k] * std::cos((k + 2) * theta + phases[k]);
  return radius * s;
}

ShapeDraw sample_shape(RngState state, const SynthConfig& config, Label label) {
  Rng rng(state);
  const double mean = config.diameter_mean(label);
  const double sd = config.diameter_std;
  double diameter = mean;
  if (sd > 0.0) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 3.0);
    diameter = mean + sd * z;
  }
  RadialProfile p;
  p.radius = diameter / 2.0;
  const double irr = config.irregularity(label);
  for (int k = 0; k < 4; ++k) {
    p.amplitudes[k] = rng.uniform(-irr, irr);
    p.phases[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  // uniform() is closed on the right; fold 2pi back onto 0.
  for (auto& ph : p.phases) {
    if (ph >= 2.0 * std::numbers::pi) ph = 0.0;
  }
  return {p, rng.state()};
}

Sample render_sample(const SynthConfig& config, Label label, RngState state, const std::string& id) {
  auto [shape, after_shape] = sample_shape(state, config, label);
  Rng rng(after_shape);
  const int n = config.image_size;
  const double jitter = config.center_jitter * n;
  const double cx = (n - 1) / 2.0 + rng.uniform(-jitter, jitter);
  const double cy = (n - 1) / 2.0 + rng.uniform(-jitter, jitter);

  const Rgb& shift = label == Label::kMalignant ? config.malignant_color_shift
                                                : config.benign_color_shift;
  Rgb lesion{};
  for (int c = 0; c < 3; ++c) {
    double v = config.lesion_color[c] + shift[c];
    if (config.lesion_color_jitter > 0.0) v += config.lesion_color_jitter * rng.normal();
    lesion[c] = std::clamp(v, 0.0, 1.0);
  }

  ImageBuffer img(n, n);
  static constexpr double kOffsets[2] = {-0.25, 0.25};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      int inside = 0;
      for (double oy : kOffsets) {
        for (double ox : kOffsets) {
          const double dx = x + ox - cx;
          const double dy = y + oy - cy;
          if (std::hypot(dx, dy) <= shape(std::atan2(dy, dx))) ++inside;
        }
      }
      const double cov = inside / 4.0;
      for (int c = 0; c < 3; ++c) {
        double v = config.skin_color[c] * (1.0 - cov) + lesion[c] * cov;
        if (config.noise_std > 0.0) v += config.noise_std * rng.normal();
        // Quantized so that in-memory samples equal their PPM round trip.
        img.at(x, y, c) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
  }
  Sample s;
  s.id = id;
  s.path = "images/" + id + ".ppm";
  s.label = label;
  s.image = std::make_shared<const ImageBuffer>(std::move(img));
  return s;
}

DatasetManifest generate_samples(const SynthConfig& config, std::uint64_t master_seed,
                                 const std::filesystem::path& root) {
  config.validate();
  std::vector<Sample> records;
  records.reserve(config.split_counts.total());
  for (Split split : kSplits) {
    for (int i = 0; i < config.split_counts[split]; ++i) {
      const std::string id = "synth-" + std::string(to_string(split)) + "-" + std::to_string(i);
      const Label label = i % 2 == 0 ? Label::kBenign : Label::kMalignant;
      Sample s = render_sample(config, label, derive_stream(master_seed, id, 0, "synth"), id);
      s.split = split;
      records.push_back(std::move(s));
    }
  }
  return DatasetManifest(root, std::move(records));
}

DatasetManifest generate_dataset(const SynthConfig& config, std::uint64_t master_seed,
                                 const std::filesystem::path& out_dir) {
  DatasetManifest m = generate_samples(config, master_seed, out_dir);
  std::filesystem::create_directories(out_dir / "images");
  for (const auto& r : m.records()) write_image(*r.image, out_dir / r.path);
  save_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace sizeaug
