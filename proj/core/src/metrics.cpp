/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "sizeaug/error.hpp"

namespace sizeaug {

std::size_t LesionMask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return (lower + upper) / 2.0;
}

}  // namespace

LesionMask segment_lesion(const ImageBuffer& img, double threshold) {
  const int w = img.width();
  const int h = img.height();
  double bg[3];
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ring;
    for (int x = 0; x < w; ++x) {
      ring.push_back(img.at(x, 0, c));
      if (h > 1) ring.push_back(img.at(x, h - 1, c));
    }
    for (int y = 1; y + 1 < h; ++y) {
      ring.push_back(img.at(0, y, c));
      if (w > 1) ring.push_back(img.at(w - 1, y, c));
    }
    bg[c] = median(std::move(ring));
  }

  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::uint8_t> fg(n, 0);
  const double t2 = threshold * threshold;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = img.at(x, y, c) - bg[c];
        d2 += d * d;
      }
      fg[static_cast<std::size_t>(y) * w + x] = d2 > t2 ? 1 : 0;
    }
  }

  // 4-connected labeling by flood fill; the first-found component wins ties.
  std::vector<int> label(n, 0);
  std::vector<std::size_t> stack;
  int best_label = 0;
  std::size_t best_area = 0;
  int next_label = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (!fg[start] || label[start] != 0) continue;
    const int lbl = ++next_label;
    std::size_t area = 0;
    stack.push_back(start);
    label[start] = lbl;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++area;
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) return;
        const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
        if (fg[q] && label[q] == 0) {
          label[q] = lbl;
          stack.push_back(q);
        }
      };
      visit(x - 1, y);
      visit(x + 1, y);
      visit(x, y - 1);
      visit(x, y + 1);
    }
    if (area > best_area) {
      best_area = area;
      best_label = lbl;
    }
  }

  if (best_area == 0 || static_cast<double>(best_area) < 0.001 * static_cast<double>(n)) {
    throw Error(ErrorCode::kNoLesion, "no foreground component above 0.1% of the image");
  }
  LesionMask mask{w, h, std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i) mask.bits[i] = label[i] == best_label ? 1 : 0;
  return mask;
}

double equivalent_diameter(const LesionMask& mask) {
  const std::size_t area = mask.area();
  if (area == 0) throw Error(ErrorCode::kEmptyMask, "mask has no lesion pixels");
  return 2.0 * std::sqrt(static_cast<double>(area) / std::numbers::pi);
}

double ks_pvalue(double d, std::size_t na, std::size_t nb) {
  const double n = static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(na + nb);
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  // Alternating series; when it has not settled by k = 100 the tail is 1 to
  // working precision (lambda is tiny).
  const double a2 = -2.0 * lambda * lambda;
  double sum = 0.0;
  double sign = 1.0;
  double prev_term = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * 2.0 * std::exp(a2 * k * k);
    sum += term;
    if (std::abs(term) <= 1e-3 * prev_term || std::abs(term) <= 1e-8 * sum) {
      return std::clamp(sum, 0.0, 1.0);
    }
    sign = -sign;
    prev_term = std::abs(term);
  }
  return 1.0;
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 5 || b.size() < 5) {
    throw Error(ErrorCode::kSampleTooSmall, "KS test needs at least 5 values per sample");
  }
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  // Step both CDFs past every copy of the next value before comparing.
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {d, ks_pvalue(d, sa.size(), sb.size())};
}

Label SizeProbe::predict(double diameter) const {
  const bool above = diameter > threshold;
  if (polarity == Polarity::kMalignantAbove) return above ? Label::kMalignant : Label::kBenign;
  return above ? Label::kBenign : Label::kMalignant;
}

SizeProbe fit_size_probe(std::span<const LabeledDiameter> train) {
  std::vector<LabeledDiameter> v(train.begin(), train.end());
  const auto n_mal = std::count_if(v.begin(), v.end(),
                                   [](const auto& s) { return s.label == Label::kMalignant; });
  if (n_mal == 0 || n_mal == static_cast<long>(v.size())) {
    throw Error(ErrorCode::kOneClassOnly, "size probe needs both classes");
  }
  std::sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.diameter < y.diameter; });

  // Sweep thresholds left to right. `mal_below` / `ben_below` count samples at
  // or below the current threshold.
  const long total = static_cast<long>(v.size());
  const long n_ben = total - n_mal;
  long mal_below = 0;
  long ben_below = 0;
  SizeProbe best{-std::numeric_limits<double>::infinity(), Polarity::kMalignantAbove};
  long best_correct = -1;
  auto consider = [&](double thr) {
    const long above_correct = ben_below + (n_mal - mal_below);
    const long below_correct = mal_below + (n_ben - ben_below);
    if (above_correct > best_correct) {
      best_correct = above_correct;
      best = {thr, Polarity::kMalignantAbove};
    }
    if (below_correct > best_correct) {
      best_correct = below_correct;
      best = {thr, Polarity::kMalignantBelow};
    }
  };
  consider(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  while (i < v.size()) {
    const double x = v[i].diameter;
    while (i < v.size() && v[i].diameter == x) {
      (v[i].label == Label::kMalignant ? mal_below : ben_below)++;
      ++i;
    }
    const double thr = i < v.size() ? x + (v[i].diameter - x) / 2.0
                                    : std::numeric_limits<double>::infinity();
    consider(thr);
  }
  return best;
}

double eval_size_probe(const SizeProbe& probe, std::span<const LabeledDiameter> test) {
  if (test.empty()) throw Error(ErrorCode::kSampleTooSmall, "empty probe evaluation set");
  long correct = 0;
  for (const auto& s : test) correct += probe.predict(s.diameter) == s.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double LesionStats::benign_mean() const { return mean_of(benign_diameters); }
double LesionStats::malignant_mean() const { return mean_of(malignant_diameters); }

LesionStats class_size_stats(std::span<const Sample> samples, const DatasetManifest& source,
                             int sample_limit, double threshold) {
  std::vector<const Sample*> order;
  for (const auto& s : samples) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const Sample* a, const Sample* b) { return a->id < b->id; });

  LesionStats stats;
  std::vector<LabeledDiameter> fit_half;
  std::vector<LabeledDiameter> held_out;
  int taken[2] = {0, 0};
  for (const Sample* s : order) {
    const int cls = static_cast<int>(s->label);
    if (taken[cls] >= sample_limit) continue;
    ++taken[cls];
    double d;
    try {
      d = equivalent_diameter(segment_lesion(source.load_image(*s), threshold));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoLesion) throw;
      ++stats.skipped;
      continue;
    }
    auto& list = s->label == Label::kMalignant ? stats.malignant_diameters : stats.benign_diameters;
    (list.size() % 2 == 0 ? fit_half : held_out).push_back({d, s->label});
    list.push_back(d);
  }
  if (stats.benign_diameters.size() < 5 || stats.malignant_diameters.size() < 5) {
    throw Error(ErrorCode::kSampleTooSmall,
                "need at least 5 measurable lesions per class (benign " +
                    std::to_string(stats.benign_diameters.size()) + ", malignant " +
                    std::to_string(stats.malignant_diameters.size()) + ")");
  }
  const KsResult ks = ks_two_sample(stats.benign_diameters, stats.malignant_diameters);
  stats.ks_statistic = ks.statistic;
  stats.ks_pvalue = ks.pvalue;
  stats.probe = fit_size_probe(fit_half);
  stats.probe_train_accuracy = eval_size_probe(stats.probe, fit_half);
  stats.probe_test_accuracy = eval_size_probe(stats.probe, held_out);
  return stats;
}

LesionStats class_size_stats(const DatasetManifest& manifest, int sample_limit, double threshold) {
  return class_size_stats(manifest.records(), manifest, sample_limit, threshold);
}

nlohmann::json stats_summary_json(const LesionStats& s) {
  return {
      {"benign_mean_px", s.benign_mean()},
      {"malignant_mean_px", s.malignant_mean()},
      {"ks_d", s.ks_statistic},
      {"ks_p", s.ks_pvalue},
      {"probe_train_acc", s.probe_train_accuracy},
      {"probe_test_acc", s.probe_test_accuracy},
      {"skipped", s.skipped},
  };
}

}  // namespace sizeaug
