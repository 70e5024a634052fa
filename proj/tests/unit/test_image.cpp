/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "sizeaug/error.hpp"
#include "sizeaug/image.hpp"
#include "support.hpp"

using namespace sizeaug;

namespace {

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

ErrorCode decode_error(const std::string& s) {
  try {
    const auto b = bytes_of(s);
    decode_ppm(b);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_SUITE("image") {
  TEST_CASE("buffer invariants") {
    CHECK_THROWS_AS(ImageBuffer(0, 4), Error);
    CHECK_THROWS_AS(ImageBuffer(2, 2, std::vector<double>(11, 0.0)), Error);
    CHECK_THROWS_AS(ImageBuffer(2, 2, std::vector<double>(12, 1.5)), Error);
    const ImageBuffer img(3, 2);
    CHECK(img.size() == 18);
    CHECK(img.width() == 3);
    CHECK(img.height() == 2);
  }

  TEST_CASE("black 2x2 decodes to zeros") {
    std::string s = "P6\n2 2\n255\n";
    s.append(12, '\0');
    const auto b = bytes_of(s);
    const ImageBuffer img = decode_ppm(b);
    CHECK(img.width() == 2);
    CHECK(img.height() == 2);
    for (double v : img.data()) CHECK(v == 0.0);
  }

  TEST_CASE("header comments and byte scaling") {
    std::string s = "P6 # comment\n1 1\n255\n";
    s += static_cast<char>(255);
    s += static_cast<char>(0);
    s += static_cast<char>(51);
    const auto b = bytes_of(s);
    const ImageBuffer img = decode_ppm(b);
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(0, 0, 1) == 0.0);
    CHECK(img.at(0, 0, 2) == doctest::Approx(0.2));
  }

  TEST_CASE("parse errors are distinct") {
    CHECK(decode_error("P5\n2 2\n255\n") == ErrorCode::kMalformedHeader);
    CHECK(decode_error("P6\n2\n") == ErrorCode::kMalformedHeader);
    CHECK(decode_error("P6\n2 2\n65535\n") == ErrorCode::kUnsupportedMaxval);
    CHECK(decode_error("P6\n2 2\n255\nabc") == ErrorCode::kTruncatedPayload);
  }

  TEST_CASE("quantized round trip through a file") {
    ImageBuffer img(5, 3);
    int k = 0;
    for (double& v : img.data()) v = static_cast<double>((k++ * 37) % 256) / 255.0;
    const auto dir = testing::scratch_dir("image_rt");
    write_image(img, dir / "a.ppm");
    CHECK(read_image(dir / "a.ppm") == img);
    CHECK(decode_ppm(encode_ppm(img)) == img);
  }

  TEST_CASE("missing file is an I/O error") {
    try {
      read_image("/nonexistent/sizeaug.ppm");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK((e.code() == ErrorCode::kIo || e.code() == ErrorCode::kMissingFile));
    }
  }
}
