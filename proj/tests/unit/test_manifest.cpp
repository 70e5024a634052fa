/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <doctest.h>

#include <string>

#include "sizeaug/error.hpp"
#include "sizeaug/manifest.hpp"
#include "support.hpp"

using namespace sizeaug;

TEST_SUITE("manifest") {
  TEST_CASE("label and split names") {
    CHECK(parse_label("benign") == Label::kBenign);
    CHECK(parse_label("malignant") == Label::kMalignant);
    CHECK(parse_split("validation") == Split::kValidation);
    CHECK(to_string(Split::kTest) == "test");
    CHECK_THROWS_AS(parse_label("nevus"), Error);
    CHECK_THROWS_AS(parse_split("holdout"), Error);
  }

  TEST_CASE("one record per split") {
    const std::string csv =
        "id,path,label,split\n"
        "a,images/a.ppm,benign,train\n"
        "b,images/b.ppm,malignant,validation\n"
        "c,images/c.ppm,benign,test\n";
    const DatasetManifest m = parse_manifest_csv(csv, "/data");
    CHECK(m.counts() == SplitCounts{1, 1, 1});
    CHECK(m.split(Split::kValidation).at(0).id == "b");
    CHECK(m.split(Split::kValidation).at(0).label == Label::kMalignant);
  }

  TEST_CASE("duplicate id is rejected") {
    const std::string csv =
        "id,path,label,split\n"
        "a,a.ppm,benign,train\n"
        "a,b.ppm,benign,test\n";
    try {
      parse_manifest_csv(csv, "/data");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDuplicateId);
    }
  }

  TEST_CASE("unknown label in a row") {
    const std::string csv = "id,path,label,split\na,a.ppm,mole,train\n";
    CHECK_THROWS_AS(parse_manifest_csv(csv, "/data"), Error);
  }

  TEST_CASE("isic split preset") {
    const SplitCounts c = split_count_preset("isic2018-counts");
    CHECK(c.train == 1686);
    CHECK(c.validation == 210);
    CHECK(c.test == 213);
    CHECK_THROWS_AS(split_count_preset("other"), Error);
  }

  TEST_CASE("save and load round trip") {
    const auto dir = testing::scratch_dir("manifest_rt");
    const DatasetManifest m(dir, {{"x1", "images/x1.ppm", Label::kBenign, Split::kTrain, nullptr},
                                  {"x2", "images/x2.ppm", Label::kMalignant, Split::kTest, nullptr}});
    save_manifest(m, dir / "manifest.csv");
    const DatasetManifest back = load_manifest(dir / "manifest.csv");
    CHECK(back.records() == m.records());
    CHECK(back.counts() == m.counts());
    CHECK_THROWS_AS(back.resolve(back.records()[0]), Error);
  }
}
