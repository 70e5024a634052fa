/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <benchmark/benchmark.h>

#include <vector>

#include "sizeaug/augment.hpp"
#include "sizeaug/metrics.hpp"
#include "sizeaug/model.hpp"
#include "sizeaug/rng.hpp"
#include "sizeaug/synth.hpp"

using namespace sizeaug;

namespace {

std::vector<ImageBuffer> synth_batch(int n) {
  const SynthConfig config;
  std::vector<ImageBuffer> out;
  for (int i = 0; i < n; ++i) {
    const Label label = i % 2 ? Label::kMalignant : Label::kBenign;
    out.push_back(*render_sample(config, label, RngState{static_cast<std::uint64_t>(i)}, "b").image);
  }
  return out;
}

void BM_SplitMix(benchmark::State& state) {
  RngState s{1};
  for (auto _ : state) {
    const Draw d = splitmix_next(s);
    s = d.next;
    benchmark::DoNotOptimize(d.value);
  }
}
BENCHMARK(BM_SplitMix);

void BM_DeriveStream(benchmark::State& state) {
  std::int64_t epoch = 0;
  for (auto _ : state) benchmark::DoNotOptimize(derive_stream(42, "synth-train-17", epoch++, "zoom"));
}
BENCHMARK(BM_DeriveStream);

void BM_Augment(benchmark::State& state) {
  const auto batch = synth_batch(1);
  const Sample sample{"synth-train-0", "", Label::kBenign, Split::kTrain, nullptr};
  const AugmentationPolicy policy = test_table2_policy();
  std::int64_t epoch = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_augmentation(batch[0], sample, policy, 42, epoch++));
  }
}
BENCHMARK(BM_Augment);

void BM_SegmentAndMeasure(benchmark::State& state) {
  const auto batch = synth_batch(1);
  for (auto _ : state) benchmark::DoNotOptimize(equivalent_diameter(segment_lesion(batch[0])));
}
BENCHMARK(BM_SegmentAndMeasure);

void BM_Render(benchmark::State& state) {
  const SynthConfig config;
  std::uint64_t k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_sample(config, Label::kMalignant, RngState{k++}, "r"));
  }
}
BENCHMARK(BM_Render);

void BM_Forward(benchmark::State& state) {
  const Model model = init_model(micro_default_config(), 1);
  const auto batch = synth_batch(static_cast<int>(state.range(0)));
  ForwardResult result;
  for (auto _ : state) {
    forward(model, batch, Mode::kEval, RngState{}, result);
    benchmark::DoNotOptimize(result.probabilities.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const Model model = init_model(micro_default_config(), 1);
  const auto batch = synth_batch(static_cast<int>(state.range(0)));
  std::vector<Label> labels;
  for (int i = 0; i < state.range(0); ++i) labels.push_back(i % 2 ? Label::kMalignant : Label::kBenign);
  ForwardResult result;
  for (auto _ : state) {
    forward(model, batch, Mode::kTrain, RngState{3}, result);
    benchmark::DoNotOptimize(backward(model, result, labels));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_KolmogorovSmirnov(benchmark::State& state) {
  Rng rng(RngState{5});
  std::vector<double> a(300), b(300);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal() + 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(ks_two_sample(a, b));
}
BENCHMARK(BM_KolmogorovSmirnov);

}  // namespace
BENCHMARK_MAIN();
