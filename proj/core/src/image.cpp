/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "sizeaug/error.hpp"

namespace sizeaug {

ImageBuffer::ImageBuffer(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(width) * height * kChannels, 0.0);
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * kChannels) {
    throw Error(ErrorCode::kInvalidArgument, "image data length does not match dimensions");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "intensity outside [0, 1]");
    }
  }
}

ImageBuffer ImageBuffer::filled(int width, int height, double r, double g, double b) {
  ImageBuffer img(width, height);
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); i += kChannels) {
    d[i] = r;
    d[i + 1] = g;
    d[i + 2] = b;
  }
  return img;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then parses a decimal field.
  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw Error(ErrorCode::kMalformedHeader, "expected integer in PPM header");
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) throw Error(ErrorCode::kMalformedHeader, "PPM header value too large");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void consume_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw Error(ErrorCode::kMalformedHeader, "missing whitespace after maxval");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

ImageBuffer decode_ppm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw Error(ErrorCode::kMalformedHeader, "not a binary PPM (P6)");
  }
  HeaderReader hdr(bytes);
  const long width = hdr.next_int();
  const long height = hdr.next_int();
  const long maxval = hdr.next_int();
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kMalformedHeader, "PPM dimensions must be positive");
  }
  if (maxval != 255) {
    throw Error(ErrorCode::kUnsupportedMaxval, "maxval " + std::to_string(maxval));
  }
  hdr.consume_single_whitespace();
  const std::size_t n = static_cast<std::size_t>(width) * height * ImageBuffer::kChannels;
  if (bytes.size() - hdr.pos() < n) {
    throw Error(ErrorCode::kTruncatedPayload,
                "expected " + std::to_string(n) + " raster bytes, found " +
                    std::to_string(bytes.size() - hdr.pos()));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = bytes[hdr.pos() + i] / 255.0;
  return ImageBuffer(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

std::vector<unsigned char> encode_ppm(const ImageBuffer& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + img.size());
  for (double v : img.data()) {
    out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  return out;
}

ImageBuffer read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

void write_image(const ImageBuffer& img, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace sizeaug
