/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace sizeaug {

// Row-major H x W x 3 raster of intensities in [0, 1].
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  // Zero-filled image. Throws on non-positive dimensions.
  ImageBuffer(int width, int height);
  // Takes ownership of `data`; validates length and the [0, 1] range.
  ImageBuffer(int width, int height, std::vector<double> data);

  static ImageBuffer filled(int width, int height, double r, double g, double b);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int x, int y, int c) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  double at(int x, int y, int c) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// Binary PPM (P6, maxval 255). Intensity = byte / 255 on read,
// byte = round(intensity * 255) on write.
ImageBuffer read_image(const std::filesystem::path& path);
void write_image(const ImageBuffer& img, const std::filesystem::path& path);

ImageBuffer decode_ppm(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_ppm(const ImageBuffer& img);

}  // namespace sizeaug
