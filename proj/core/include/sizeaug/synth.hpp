/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "sizeaug/manifest.hpp"
#include "sizeaug/rng.hpp"

namespace sizeaug {

using Rgb = std::array<double, 3>;

// Synthetic lesion generator settings. Lesion size, border irregularity and
// lesion hue each carry class information; size is the confound.
struct SynthConfig {
  int image_size = 64;
  double malignant_diameter_mean = 24.0;  // px
  double benign_diameter_ratio = 0.9;     // benign mean / malignant mean
  double diameter_std = 1.0;              // px, both classes
  double benign_irregularity = 0.02;      // harmonic amplitude bound
  double malignant_irregularity = 0.2;
  Rgb lesion_color{0.45, 0.30, 0.22};
  Rgb skin_color{0.86, 0.68, 0.58};
  Rgb benign_color_shift{0.0, 0.0, 0.0};
  Rgb malignant_color_shift{0.06, 0.0, 0.0};
  double lesion_color_jitter = 0.03;  // per-sample, per-channel std of the lesion color
  double noise_std = 0.02;
  double center_jitter = 0.1;  // max center offset as a fraction of image_size
  SplitCounts split_counts{600, 100, 400};

  double diameter_mean(Label label) const {
    return label == Label::kMalignant ? malignant_diameter_mean
                                      : malignant_diameter_mean * benign_diameter_ratio;
  }
  double irregularity(Label label) const {
    return label == Label::kMalignant ? malignant_irregularity : benign_irregularity;
  }
  // Throws InvalidArgument when a field is out of range.
  void validate() const;
};

// Same generator with split counts 1686 / 210 / 213.
SynthConfig paper_synth_config();

nlohmann::json synth_config_to_json(const SynthConfig& config);
// Missing keys keep their defaults.
SynthConfig synth_config_from_json(const nlohmann::json& j);

// r(theta) = R * (1 + sum_{k=2..5} a_k cos(k theta + phi_k)).
struct RadialProfile {
  double radius = 0.0;
  std::array<double, 4> amplitudes{};
  std::array<double, 4> phases{};

  double operator()(double theta) const;
};

struct ShapeDraw {
  RadialProfile profile;
  RngState next;
};

// Radius from the class diameter distribution (Gaussian truncated to +-3 std
// by rejection), amplitudes uniform in +-irregularity, phases uniform in [0, 2pi).
ShapeDraw sample_shape(RngState rng, const SynthConfig& config, Label label);

// Rasterizes one lesion with 2x2 supersampling, then adds clamped Gaussian
// pixel noise. The returned sample carries its image in memory.
Sample render_sample(const SynthConfig& config, Label label, RngState rng, const std::string& id);

// Every record for the configured split counts with images attached; ids are
// synth-<split>-<n>, classes alternate starting with benign.
DatasetManifest generate_samples(const SynthConfig& config, std::uint64_t master_seed,
                                 const std::filesystem::path& root = {});

// generate_samples + one PPM per record under out_dir/images and out_dir/manifest.csv.
DatasetManifest generate_dataset(const SynthConfig& config, std::uint64_t master_seed,
                                 const std::filesystem::path& out_dir);

}  // namespace sizeaug
