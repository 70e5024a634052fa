/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "sizeaug/error.hpp"

namespace sizeaug {

std::string_view to_string(Label label) {
  return label == Label::kBenign ? "benign" : "malignant";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

Label parse_label(std::string_view text) {
  if (text == "benign") return Label::kBenign;
  if (text == "malignant") return Label::kMalignant;
  throw Error(ErrorCode::kUnknownLabel, "'" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw Error(ErrorCode::kUnknownSplit, "'" + std::string(text) + "'");
}

int& SplitCounts::operator[](Split s) noexcept {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValidation: return validation;
    case Split::kTest: return test;
  }
  return train;
}

int SplitCounts::operator[](Split s) const noexcept {
  return const_cast<SplitCounts&>(*this)[s];
}

SplitCounts split_count_preset(std::string_view name) {
  if (name == "isic2018-counts") return SplitCounts{1686, 210, 213};
  throw Error(ErrorCode::kInvalidArgument, "unknown split preset '" + std::string(name) + "'");
}

DatasetManifest::DatasetManifest(std::filesystem::path root, std::vector<Sample> records)
    : root_(std::move(root)), records_(std::move(records)) {
  std::unordered_set<std::string> seen;
  for (const auto& r : records_) {
    if (!seen.insert(r.id).second) throw Error(ErrorCode::kDuplicateId, "'" + r.id + "'");
    ++counts_[r.split];
  }
}

std::vector<Sample> DatasetManifest::split(Split s) const {
  std::vector<Sample> out;
  for (const auto& r : records_) {
    if (r.split == s) out.push_back(r);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const Sample& sample) const {
  auto p = root_ / sample.path;
  if (!std::filesystem::is_regular_file(p)) {
    throw Error(ErrorCode::kMissingFile, sample.id + " -> " + p.string());
  }
  return p;
}

ImageBuffer DatasetManifest::load_image(const Sample& sample) const {
  if (sample.image) return *sample.image;
  return read_image(resolve(sample));
}

std::shared_ptr<const ImageBuffer> DatasetManifest::shared_image(const Sample& sample) const {
  if (sample.image) return sample.image;
  return std::make_shared<const ImageBuffer>(read_image(resolve(sample)));
}

namespace {

constexpr std::string_view kHeader = "id,path,label,split";

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

DatasetManifest parse_manifest_csv(std::string_view text, std::filesystem::path root) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMalformedHeader, "empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw Error(ErrorCode::kMalformedHeader, "manifest header must be '" + std::string(kHeader) + "'");
  }
  std::vector<Sample> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 4) {
      throw Error(ErrorCode::kMalformedHeader,
                  "line " + std::to_string(line_no) + ": expected 4 fields");
    }
    Sample s;
    s.id = f[0];
    s.path = f[1];
    s.label = parse_label(f[2]);
    s.split = parse_split(f[3]);
    records.push_back(std::move(s));
  }
  return DatasetManifest(std::move(root), std::move(records));
}

std::string format_manifest_csv(const DatasetManifest& manifest) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& r : manifest.records()) {
    out.append(r.id).append(",").append(r.path).append(",");
    out.append(to_string(r.label)).append(",").append(to_string(r.split)).append("\n");
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest_csv(buf.str(), path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest " + path.string());
  out << format_manifest_csv(manifest);
}

}  // namespace sizeaug
