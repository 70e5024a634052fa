/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <string_view>

namespace sizeaug {

// SplitMix64 state. Advanced by value; the output sequence depends only on
// the initial state.
struct RngState {
  std::uint64_t state = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

struct Draw {
  std::uint64_t value;
  RngState next;
};

struct UniformDraw {
  double x;
  RngState next;
};

constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr Draw splitmix_next(RngState s) noexcept {
  RngState next{s.state + kSplitMixGamma};
  return {splitmix_mix(next.state), next};
}

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// Independent stream for one (sample, epoch, operation) triple. `op_tag`
// must be one of: rotation, contrast, zoom, synth, dropout, init, shuffle.
RngState derive_stream(std::uint64_t master_seed, std::string_view sample_id,
                       std::int64_t epoch, std::string_view op_tag);

// x = lo + (hi - lo) * (value >> 11) / 2^53. Throws if lo > hi.
UniformDraw uniform(RngState rng, double lo, double hi);

// Mutable convenience wrapper used inside loops that consume many draws.
class Rng {
 public:
  explicit Rng(RngState s) : state_(s) {}

  std::uint64_t next_u64() noexcept {
    auto d = splitmix_next(state_);
    state_ = d.next;
    return d.value;
  }
  double uniform(double lo, double hi);
  // Unit-interval double in [0, 1).
  double unit() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Standard normal via Box-Muller (one value per call, two uniforms consumed).
  double normal();
  // Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  RngState state() const noexcept { return state_; }

 private:
  RngState state_;
};

}  // namespace sizeaug
