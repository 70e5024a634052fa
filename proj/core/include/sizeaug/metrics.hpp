/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sizeaug/image.hpp"
#include "sizeaug/manifest.hpp"

namespace sizeaug {

struct LesionMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 1 = lesion

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t area() const;
};

inline constexpr double kDefaultSegmentThreshold = 0.10;

// Background = per-channel median of the 1-px border ring; pixels farther than
// `threshold` (Euclidean RGB) from it are foreground; the largest 4-connected
// component is kept. Throws NoLesion when it covers < 0.1% of the image.
LesionMask segment_lesion(const ImageBuffer& img, double threshold = kDefaultSegmentThreshold);

// 2 * sqrt(area / pi). Throws EmptyMask.
double equivalent_diameter(const LesionMask& mask);

struct KsResult {
  double statistic = 0.0;
  double pvalue = 1.0;
};

// Asymptotic Kolmogorov tail with the small-sample correction
// lambda = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) * d, n = na * nb / (na + nb).
double ks_pvalue(double d, std::size_t na, std::size_t nb);

// Two-sample Kolmogorov-Smirnov test. Both samples need at least 5 values.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

enum class Polarity { kMalignantAbove, kMalignantBelow };

// One-dimensional threshold classifier on lesion diameter. The threshold may be
// +-infinity, in which case the probe predicts a single class.
struct SizeProbe {
  double threshold = 0.0;
  Polarity polarity = Polarity::kMalignantAbove;

  Label predict(double diameter) const;
};

struct LabeledDiameter {
  double diameter;
  Label label;
};

// Maximizes training accuracy over every midpoint between consecutive distinct
// diameters plus +-infinity; ties go to the smallest threshold, then to
// Malignant-above. Throws OneClassOnly.
SizeProbe fit_size_probe(std::span<const LabeledDiameter> train);
double eval_size_probe(const SizeProbe& probe, std::span<const LabeledDiameter> test);

struct LesionStats {
  std::vector<double> benign_diameters;
  std::vector<double> malignant_diameters;
  double ks_statistic = 0.0;
  double ks_pvalue = 1.0;
  SizeProbe probe;
  double probe_train_accuracy = 0.0;
  double probe_test_accuracy = 0.0;
  int skipped = 0;

  double benign_mean() const;
  double malignant_mean() const;
};

// Segments and measures up to `sample_limit` images per class (in id order).
// Samples without a detectable lesion are skipped and tallied. Within each
// class, measured samples alternate between the probe's fit half and its
// held-out half. Throws SampleTooSmall below 5 measurements per class.
LesionStats class_size_stats(const DatasetManifest& manifest, int sample_limit,
                             double threshold = kDefaultSegmentThreshold);
LesionStats class_size_stats(std::span<const Sample> samples, const DatasetManifest& source,
                             int sample_limit, double threshold = kDefaultSegmentThreshold);

// {benign_mean_px, malignant_mean_px, ks_d, ks_p, probe_train_acc, probe_test_acc, skipped}
nlohmann::json stats_summary_json(const LesionStats& stats);

}  // namespace sizeaug
