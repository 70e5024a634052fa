/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "sizeaug/error.hpp"
#include "sizeaug/metrics.hpp"
#include "sizeaug/synth.hpp"
#include "support.hpp"

using namespace sizeaug;

namespace {

SynthConfig clean_disk_config() {
  SynthConfig c;
  c.noise_std = 0.0;
  c.benign_irregularity = 0.0;
  c.malignant_irregularity = 0.0;
  c.center_jitter = 0.0;
  c.lesion_color_jitter = 0.0;
  c.diameter_std = 0.0;
  return c;
}

// Mean red-minus-green over the segmented lesion: a color-only feature.
double lesion_red_excess(const ImageBuffer& img) {
  const LesionMask mask = segment_lesion(img);
  double sum = 0.0;
  int n = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (mask.at(x, y)) {
        sum += img.at(x, y, 0) - img.at(x, y, 1);
        ++n;
      }
  return sum / n;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("zero irregularity gives a circle") {
    SynthConfig c;
    c.benign_irregularity = 0.0;
    const ShapeDraw d = sample_shape(RngState{1}, c, Label::kBenign);
    for (double t = 0.0; t < 6.3; t += 0.1) CHECK(d.profile(t) == d.profile.radius);
  }

  TEST_CASE("profile stays positive and radii stay truncated") {
    SynthConfig c;
    RngState s{2};
    for (int i = 0; i < 2000; ++i) {
      const Label label = i % 2 ? Label::kMalignant : Label::kBenign;
      const ShapeDraw d = sample_shape(s, c, label);
      const double mean_r = c.diameter_mean(label) / 2.0;
      CHECK(std::abs(d.profile.radius - mean_r) <= 3.0 * c.diameter_std / 2.0 + 1e-12);
      double lo = 1e9;
      for (int k = 0; k < 360; ++k) lo = std::min(lo, d.profile(k * std::numbers::pi / 180.0));
      CHECK(lo > 0.0);
      s = d.next;
    }
  }

  TEST_CASE("mean radius ratio matches the configured ratio") {
    for (double ratio : {0.8, SynthConfig{}.benign_diameter_ratio}) {
      SynthConfig c;
      c.benign_diameter_ratio = ratio;
      if (ratio == 0.8) c.diameter_std = 2.5;
      RngState s{3};
      double b = 0.0, m = 0.0;
      const int n = 10000;
      for (int i = 0; i < n; ++i) {
        const ShapeDraw db = sample_shape(s, c, Label::kBenign);
        const ShapeDraw dm = sample_shape(db.next, c, Label::kMalignant);
        b += db.profile.radius;
        m += dm.profile.radius;
        s = dm.next;
      }
      CHECK(std::abs(b / m - ratio) <= 0.02);
    }
  }

  TEST_CASE("noise free disk is recovered within one pixel") {
    SynthConfig c = clean_disk_config();
    for (double d : {12.0, 20.0, 30.0, 44.0}) {
      c.malignant_diameter_mean = d;
      const Sample s = render_sample(c, Label::kMalignant, RngState{4}, "disk");
      const double measured = equivalent_diameter(segment_lesion(*s.image));
      CHECK(std::abs(measured - d) <= 1.0);
    }
  }

  TEST_CASE("render is deterministic") {
    const SynthConfig c;
    const Sample a = render_sample(c, Label::kBenign, RngState{5}, "x");
    const Sample b = render_sample(c, Label::kBenign, RngState{5}, "x");
    CHECK(*a.image == *b.image);
    CHECK(a.image->width() == 64);
  }

  TEST_CASE("lesion colored like skin is not segmentable") {
    SynthConfig c = clean_disk_config();
    c.lesion_color = c.skin_color;
    c.malignant_color_shift = {0.0, 0.0, 0.0};
    const Sample s = render_sample(c, Label::kMalignant, RngState{6}, "flat");
    try {
      segment_lesion(*s.image);
      FAIL("expected NoLesion");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNoLesion);
    }
  }

  TEST_CASE("generate_dataset writes counts and balanced classes") {
    SynthConfig c;
    c.split_counts = {4, 2, 3};
    const auto dir = testing::scratch_dir("synth_small");
    const DatasetManifest m = generate_dataset(c, 7, dir);
    CHECK(m.counts() == SplitCounts{4, 2, 3});
    int ppm = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
      if (e.path().extension() == ".ppm") ++ppm;
    CHECK(ppm == 9);
    CHECK(std::filesystem::exists(dir / "manifest.csv"));
    const auto test = m.split(Split::kTest);
    int benign = 0;
    for (const auto& s : test) benign += s.label == Label::kBenign;
    CHECK(benign == 2);
    CHECK(test[0].id == "synth-test-0");
    const DatasetManifest back = load_manifest(dir / "manifest.csv");
    CHECK(back.load_image(back.records()[0]) == m.load_image(m.records()[0]));
  }

  TEST_CASE("generate_dataset is deterministic") {
    SynthConfig c;
    c.split_counts = {3, 1, 1};
    const auto a = testing::scratch_dir("synth_det_a");
    const auto b = testing::scratch_dir("synth_det_b");
    generate_dataset(c, 11, a);
    generate_dataset(c, 11, b);
    for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
      if (!e.is_regular_file()) continue;
      const auto rel = std::filesystem::relative(e.path(), a);
      CHECK(testing::read_bytes(e.path()) == testing::read_bytes(b / rel));
    }
  }

  TEST_CASE("paper preset counts") {
    CHECK(paper_synth_config().split_counts == SplitCounts{1686, 210, 213});
  }

  TEST_CASE("config validation and json") {
    SynthConfig c;
    c.benign_diameter_ratio = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
    const SynthConfig d;
    const SynthConfig back = synth_config_from_json(synth_config_to_json(d));
    CHECK(back.benign_diameter_ratio == d.benign_diameter_ratio);
    CHECK(back.split_counts == d.split_counts);
    CHECK(synth_config_from_json(nlohmann::json::object()).image_size == 64);
  }

  TEST_CASE("class size gap and a size independent color signal") {
    SynthConfig c;
    c.split_counts = {600, 0, 200};
    const DatasetManifest m = generate_samples(c, 21);

    std::vector<double> bd, md;
    for (const auto& s : m.split(Split::kTrain)) {
      const double d = equivalent_diameter(segment_lesion(*s.image));
      (s.label == Label::kBenign ? bd : md).push_back(d);
    }
    double bm = 0.0, mm = 0.0;
    for (double d : bd) bm += d;
    for (double d : md) mm += d;
    bm /= bd.size();
    mm /= md.size();
    CHECK(std::abs(bm / mm - c.benign_diameter_ratio) <= 0.02);

    std::vector<LabeledDiameter> train, test;
    for (const auto& s : m.split(Split::kTrain)) train.push_back({lesion_red_excess(*s.image), s.label});
    for (const auto& s : m.split(Split::kTest)) test.push_back({lesion_red_excess(*s.image), s.label});
    const SizeProbe color_probe = fit_size_probe(train);
    CHECK(eval_size_probe(color_probe, test) >= 0.70);
  }
}
