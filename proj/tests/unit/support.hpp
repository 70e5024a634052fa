/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sizeaug/image.hpp"
#include "sizeaug/rng.hpp"

namespace sizeaug::testing {

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sizeaug_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ImageBuffer random_image(int w, int h, std::uint64_t seed) {
  Rng rng(RngState{seed});
  std::vector<double> data(static_cast<std::size_t>(w) * h * 3);
  for (auto& v : data) v = rng.unit();
  return ImageBuffer(w, h, std::move(data));
}

// Hard-edged disk of radius r centered at (cx, cy), exact 0/1 coverage per pixel center.
inline ImageBuffer disk_image(int size, double cx, double cy, double r) {
  ImageBuffer img = ImageBuffer::filled(size, size, 0.9, 0.9, 0.9);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (std::hypot(x - cx, y - cy) <= r) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.2;
      }
    }
  }
  return img;
}

}  // namespace sizeaug::testing
