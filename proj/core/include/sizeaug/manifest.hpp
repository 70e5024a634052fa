/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sizeaug/image.hpp"

namespace sizeaug {

enum class Label { kBenign = 0, kMalignant = 1 };
enum class Split { kTrain = 0, kValidation = 1, kTest = 2 };

inline constexpr std::array<Label, 2> kLabels = {Label::kBenign, Label::kMalignant};
inline constexpr std::array<Split, 3> kSplits = {Split::kTrain, Split::kValidation, Split::kTest};

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);  // throws UnknownLabel
Split parse_split(std::string_view text);  // throws UnknownSplit

struct SplitCounts {
  int train = 0;
  int validation = 0;
  int test = 0;

  int& operator[](Split s) noexcept;
  int operator[](Split s) const noexcept;
  int total() const noexcept { return train + validation + test; }

  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

// Named split-size presets ("isic2018-counts"). Throws InvalidArgument.
SplitCounts split_count_preset(std::string_view name);

struct Sample {
  std::string id;
  std::string path;  // relative to the manifest root
  Label label = Label::kBenign;
  Split split = Split::kTrain;
  // Decoded pixels when the sample lives in memory; shared so manifests copy cheaply.
  std::shared_ptr<const ImageBuffer> image;

  friend bool operator==(const Sample& a, const Sample& b) {
    return a.id == b.id && a.path == b.path && a.label == b.label && a.split == b.split;
  }
};

class DatasetManifest {
 public:
  DatasetManifest() = default;
  // Rejects duplicate ids.
  DatasetManifest(std::filesystem::path root, std::vector<Sample> records);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<Sample>& records() const noexcept { return records_; }
  const SplitCounts& counts() const noexcept { return counts_; }

  std::vector<Sample> split(Split s) const;
  std::filesystem::path resolve(const Sample& sample) const;  // throws MissingFile
  // In-memory image if attached, otherwise decoded from disk.
  ImageBuffer load_image(const Sample& sample) const;
  std::shared_ptr<const ImageBuffer> shared_image(const Sample& sample) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;

 private:
  std::filesystem::path root_;
  std::vector<Sample> records_;
  SplitCounts counts_;
};

// CSV with header `id,path,label,split`; paths relative to the file's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

DatasetManifest parse_manifest_csv(std::string_view text, std::filesystem::path root);
std::string format_manifest_csv(const DatasetManifest& manifest);

}  // namespace sizeaug
