/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "sizeaug/image.hpp"
#include "sizeaug/manifest.hpp"
#include "sizeaug/rng.hpp"

namespace sizeaug {

// Geometric transforms bilinearly resample about the image center
// ((W-1)/2, (H-1)/2) with reflect padding (mirror about edge pixel centers).
// All three are exact identities at factor 0 and keep values in [0, 1].

// Rotation by `turns` of a full turn, |turns| <= 0.5. Quarter-turn multiples
// use exact trigonometric values, so 0.5 turns is the index map
// (x, y) -> (W-1-x, H-1-y).
ImageBuffer rotate(const ImageBuffer& img, double turns);

// Per channel: out = clamp(mean + (1 + factor) * (in - mean), 0, 1); factor > -1.
ImageBuffer adjust_contrast(const ImageBuffer& img, double factor);

// Samples the input at center + (p - center) * (1 - f); f > 0 magnifies the
// content by 1 / (1 - f), f < 0 shrinks it. |f| <= 0.9.
ImageBuffer zoom(const ImageBuffer& img, double f);

enum class Method { kRotation = 0, kContrast = 1, kZoom = 2 };
inline constexpr std::array<Method, 3> kMethods = {Method::kRotation, Method::kContrast,
                                                   Method::kZoom};
std::string_view to_string(Method m);

struct AugmentationRange {
  double lo = 0.0;
  double hi = 0.0;

  AugmentationRange() = default;
  // Enforces -1 < lo <= hi < 1.
  AugmentationRange(double lo, double hi);

  friend bool operator==(const AugmentationRange&, const AugmentationRange&) = default;
};

// Per-class ranges for each method; an unset method is not applied.
class AugmentationPolicy {
 public:
  using ClassRanges = std::array<std::optional<AugmentationRange>, 3>;

  AugmentationPolicy() = default;
  // Both classes must define the same method set.
  AugmentationPolicy(ClassRanges benign, ClassRanges malignant);

  const std::optional<AugmentationRange>& range(Label label, Method m) const {
    return ranges_[static_cast<int>(label)][static_cast<int>(m)];
  }
  bool defines(Method m) const { return range(Label::kBenign, m).has_value(); }
  bool empty() const;

  // Same policy with `m` removed from both classes.
  AugmentationPolicy without(Method m) const;
  // Same policy restricted to `m`.
  AugmentationPolicy only(Method m) const;

  friend bool operator==(const AugmentationPolicy&, const AugmentationPolicy&) = default;

 private:
  std::array<ClassRanges, 2> ranges_{};
};

// Training policy: rotation and contrast +-0.5 for both classes, zoom
// benign [0, 0.1] and malignant [-0.1, 0].
AugmentationPolicy train_table1_policy();
// Training policy with the zoom ranges swapped between classes.
AugmentationPolicy train_inverse_policy();
// Test policy: rotation, contrast and zoom +-0.5 for both classes.
AugmentationPolicy test_table2_policy();
// "table1", "inverse", "table2". Throws InvalidArgument.
AugmentationPolicy policy_preset(std::string_view name);

// {"benign": {"rotation": [lo, hi], ...}, "malignant": {...}}
nlohmann::json policy_to_json(const AugmentationPolicy& policy);
AugmentationPolicy policy_from_json(const nlohmann::json& j);
// Accepts a preset name or a path to a JSON policy document.
AugmentationPolicy load_policy(const std::string& name_or_path);

struct AugParams {
  double rotation_turns = 0.0;
  double contrast_factor = 0.0;
  double zoom_factor = 0.0;

  friend bool operator==(const AugParams&, const AugParams&) = default;
};

struct ParamsDraw {
  AugParams params;
  RngState next;
};

// Draws each defined method from `rng` in rotation -> contrast -> zoom order.
ParamsDraw sample_params(const AugmentationPolicy& policy, Label label, RngState rng);

// Per-method streams derive_stream(seed, id, epoch, tag); the parameters a
// sample receives do not depend on which other methods are enabled.
AugParams sample_params_for(const AugmentationPolicy& policy, Label label,
                            std::uint64_t master_seed, std::string_view sample_id,
                            std::int64_t epoch);

// rotate -> adjust_contrast -> zoom; skipped methods are skipped entirely.
ImageBuffer apply_params(const ImageBuffer& img, const AugParams& params);

ImageBuffer apply_augmentation(const ImageBuffer& img, const Sample& sample,
                               const AugmentationPolicy& policy, std::uint64_t master_seed,
                               std::int64_t epoch);

// Writes one augmented PPM per record to out_dir/images/<id>.ppm and returns
// the rewritten manifest (rooted at out_dir). Output does not depend on
// `workers`.
DatasetManifest augment_dataset(const DatasetManifest& manifest, const AugmentationPolicy& policy,
                                std::uint64_t master_seed, std::int64_t epoch,
                                const std::filesystem::path& out_dir, int workers = 1);

}  // namespace sizeaug
