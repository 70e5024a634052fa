/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/augment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

#include "sizeaug/error.hpp"

namespace sizeaug {

namespace {

// Mirror about the edge pixel centers: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
int reflect_index(long i, int n) {
  if (n == 1) return 0;
  const long period = 2L * (n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return static_cast<int>(i);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Bilinear sample at (sx, sy) in lerp form: exact at integer coordinates and
// on constant neighborhoods.
void sample_bilinear(const ImageBuffer& img, double sx, double sy, double* out) {
  const double fx0 = std::floor(sx);
  const double fy0 = std::floor(sy);
  const double tx = sx - fx0;
  const double ty = sy - fy0;
  const long x0 = static_cast<long>(fx0);
  const long y0 = static_cast<long>(fy0);
  const int ix0 = reflect_index(x0, img.width());
  const int iy0 = reflect_index(y0, img.height());
  const int ix1 = tx > 0.0 ? reflect_index(x0 + 1, img.width()) : ix0;
  const int iy1 = ty > 0.0 ? reflect_index(y0 + 1, img.height()) : iy0;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    const double a = img.at(ix0, iy0, c);
    const double b = img.at(ix1, iy0, c);
    const double d = img.at(ix0, iy1, c);
    const double e = img.at(ix1, iy1, c);
    const double top = a + tx * (b - a);
    const double bottom = d + tx * (e - d);
    out[c] = clamp01(top + ty * (bottom - top));
  }
}

// Output pixel (x, y) samples the input at center + M * (p - center).
ImageBuffer resample_linear(const ImageBuffer& img, double m00, double m01, double m10,
                            double m11) {
  const double cx = (img.width() - 1) / 2.0;
  const double cy = (img.height() - 1) / 2.0;
  ImageBuffer out(img.width(), img.height());
  double px[ImageBuffer::kChannels];
  for (int y = 0; y < img.height(); ++y) {
    const double dy = y - cy;
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - cx;
      sample_bilinear(img, cx + m00 * dx + m01 * dy, cy + m10 * dx + m11 * dy, px);
      for (int c = 0; c < ImageBuffer::kChannels; ++c) out.at(x, y, c) = px[c];
    }
  }
  return out;
}

}  // namespace

ImageBuffer rotate(const ImageBuffer& img, double turns) {
  if (!(turns >= -0.5 && turns <= 0.5)) {
    throw Error(ErrorCode::kInvalidArgument, "rotate: turns outside [-0.5, 0.5]");
  }
  if (turns == 0.0) return img;
  double c;
  double s;
  const double quarters = turns * 4.0;
  if (quarters == std::round(quarters)) {
    // angle = -turns * 2pi = -quarters * pi/2
    static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    const int k = static_cast<int>(((-static_cast<long>(quarters)) % 4 + 4) % 4);
    c = kCos[k];
    s = kSin[k];
  } else {
    const double angle = -turns * 2.0 * std::numbers::pi;
    c = std::cos(angle);
    s = std::sin(angle);
  }
  return resample_linear(img, c, -s, s, c);
}

ImageBuffer adjust_contrast(const ImageBuffer& img, double factor) {
  if (!(factor > -1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "adjust_contrast: factor must exceed -1");
  }
  if (factor == 0.0) return img;
  ImageBuffer out = img;
  auto src = img.data();
  auto dst = out.data();
  const std::size_t n = src.size() / ImageBuffer::kChannels;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    double sum = 0.0;
    double lo = 1.0;
    double hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = src[i * ImageBuffer::kChannels + c];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo == hi) continue;  // flat channel is its own mean
    const double mean = sum / static_cast<double>(n);
    const double gain = 1.0 + factor;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i * ImageBuffer::kChannels + c;
      dst[k] = clamp01(mean + gain * (src[k] - mean));
    }
  }
  return out;
}

ImageBuffer zoom(const ImageBuffer& img, double f) {
  if (!(f >= -0.9 && f <= 0.9)) {
    throw Error(ErrorCode::kInvalidArgument, "zoom: factor outside [-0.9, 0.9]");
  }
  if (f == 0.0) return img;
  const double k = 1.0 - f;
  return resample_linear(img, k, 0.0, 0.0, k);
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kRotation: return "rotation";
    case Method::kContrast: return "contrast";
    case Method::kZoom: return "zoom";
  }
  return "rotation";
}

AugmentationRange::AugmentationRange(double lo_, double hi_) : lo(lo_), hi(hi_) {
  if (!(lo > -1.0 && lo <= hi && hi < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "augmentation range must satisfy -1 < lo <= hi < 1");
  }
}

AugmentationPolicy::AugmentationPolicy(ClassRanges benign, ClassRanges malignant)
    : ranges_{benign, malignant} {
  for (auto m : kMethods) {
    const int i = static_cast<int>(m);
    if (benign[i].has_value() != malignant[i].has_value()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "policy classes define different method sets (" + std::string(to_string(m)) + ")");
    }
  }
}

bool AugmentationPolicy::empty() const {
  return std::none_of(kMethods.begin(), kMethods.end(), [&](Method m) { return defines(m); });
}

AugmentationPolicy AugmentationPolicy::without(Method m) const {
  AugmentationPolicy p = *this;
  for (auto& cls : p.ranges_) cls[static_cast<int>(m)].reset();
  return p;
}

AugmentationPolicy AugmentationPolicy::only(Method m) const {
  AugmentationPolicy p;
  for (int l = 0; l < 2; ++l) p.ranges_[l][static_cast<int>(m)] = ranges_[l][static_cast<int>(m)];
  return p;
}

AugmentationPolicy train_table1_policy() {
  const AugmentationRange half(-0.5, 0.5);
  return AugmentationPolicy({half, half, AugmentationRange(0.0, 0.1)},
                            {half, half, AugmentationRange(-0.1, 0.0)});
}

AugmentationPolicy train_inverse_policy() {
  const AugmentationRange half(-0.5, 0.5);
  return AugmentationPolicy({half, half, AugmentationRange(-0.1, 0.0)},
                            {half, half, AugmentationRange(0.0, 0.1)});
}

AugmentationPolicy test_table2_policy() {
  const AugmentationRange half(-0.5, 0.5);
  return AugmentationPolicy({half, half, half}, {half, half, half});
}

AugmentationPolicy policy_preset(std::string_view name) {
  if (name == "table1") return train_table1_policy();
  if (name == "inverse") return train_inverse_policy();
  if (name == "table2") return test_table2_policy();
  if (name == "none") return AugmentationPolicy();
  throw Error(ErrorCode::kInvalidArgument, "unknown policy preset '" + std::string(name) + "'");
}

nlohmann::json policy_to_json(const AugmentationPolicy& policy) {
  nlohmann::json j = nlohmann::json::object();
  for (auto label : kLabels) {
    nlohmann::json cls = nlohmann::json::object();
    for (auto m : kMethods) {
      if (const auto& r = policy.range(label, m)) cls[std::string(to_string(m))] = {r->lo, r->hi};
    }
    j[std::string(to_string(label))] = cls;
  }
  return j;
}

AugmentationPolicy policy_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "policy must be a JSON object");
  std::array<AugmentationPolicy::ClassRanges, 2> ranges{};
  for (auto label : kLabels) {
    const std::string key(to_string(label));
    if (!j.contains(key)) continue;
    const auto& cls = j.at(key);
    for (auto it = cls.begin(); it != cls.end(); ++it) {
      Method m;
      if (it.key() == "rotation") {
        m = Method::kRotation;
      } else if (it.key() == "contrast") {
        m = Method::kContrast;
      } else if (it.key() == "zoom") {
        m = Method::kZoom;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown augmentation method '" + it.key() + "'");
      }
      const auto& v = it.value();
      if (!v.is_array() || v.size() != 2) {
        throw Error(ErrorCode::kInvalidArgument, "range for '" + it.key() + "' must be [lo, hi]");
      }
      ranges[static_cast<int>(label)][static_cast<int>(m)] =
          AugmentationRange(v[0].get<double>(), v[1].get<double>());
    }
  }
  return AugmentationPolicy(ranges[0], ranges[1]);
}

AugmentationPolicy load_policy(const std::string& name_or_path) {
  if (!std::filesystem::exists(name_or_path)) return policy_preset(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open policy " + name_or_path);
  try {
    return policy_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, name_or_path + ": " + e.what());
  }
}

namespace {

double& param_slot(AugParams& p, Method m) {
  switch (m) {
    case Method::kRotation: return p.rotation_turns;
    case Method::kContrast: return p.contrast_factor;
    case Method::kZoom: return p.zoom_factor;
  }
  return p.rotation_turns;
}

}  // namespace

ParamsDraw sample_params(const AugmentationPolicy& policy, Label label, RngState rng) {
  AugParams params;
  for (auto m : kMethods) {
    if (const auto& r = policy.range(label, m)) {
      const UniformDraw d = uniform(rng, r->lo, r->hi);
      param_slot(params, m) = d.x;
      rng = d.next;
    }
  }
  return {params, rng};
}

AugParams sample_params_for(const AugmentationPolicy& policy, Label label,
                            std::uint64_t master_seed, std::string_view sample_id,
                            std::int64_t epoch) {
  AugParams params;
  for (auto m : kMethods) {
    if (const auto& r = policy.range(label, m)) {
      const RngState s = derive_stream(master_seed, sample_id, epoch, to_string(m));
      param_slot(params, m) = uniform(s, r->lo, r->hi).x;
    }
  }
  return params;
}

ImageBuffer apply_params(const ImageBuffer& img, const AugParams& params) {
  ImageBuffer out = rotate(img, params.rotation_turns);
  out = adjust_contrast(out, params.contrast_factor);
  return zoom(out, params.zoom_factor);
}

ImageBuffer apply_augmentation(const ImageBuffer& img, const Sample& sample,
                               const AugmentationPolicy& policy, std::uint64_t master_seed,
                               std::int64_t epoch) {
  if (policy.empty()) return img;
  return apply_params(img, sample_params_for(policy, sample.label, master_seed, sample.id, epoch));
}

DatasetManifest augment_dataset(const DatasetManifest& manifest, const AugmentationPolicy& policy,
                                std::uint64_t master_seed, std::int64_t epoch,
                                const std::filesystem::path& out_dir, int workers) {
  const auto& records = manifest.records();
  std::filesystem::create_directories(out_dir / "images");
  std::vector<Sample> out_records(records.size());
  std::vector<std::string> failures(records.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const Sample& src = records[i];
      try {
        const ImageBuffer img = manifest.load_image(src);
        Sample dst = src;
        dst.path = "images/" + src.id + ".ppm";
        dst.image = std::make_shared<const ImageBuffer>(
            apply_augmentation(img, src, policy, master_seed, epoch));
        write_image(*dst.image, out_dir / dst.path);
        out_records[i] = std::move(dst);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(records.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!failures[i].empty()) {
      throw Error(ErrorCode::kIo, "record '" + records[i].id + "': " + failures[i]);
    }
  }
  return DatasetManifest(out_dir, std::move(out_records));
}

}  // namespace sizeaug
