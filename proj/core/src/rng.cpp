/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "sizeaug/error.hpp"

namespace sizeaug {

namespace {

constexpr std::array<std::string_view, 7> kStreamTags = {
    "rotation", "contrast", "zoom", "synth", "dropout", "init", "shuffle"};

bool known_tag(std::string_view tag) {
  for (auto t : kStreamTags) {
    if (t == tag) return true;
  }
  return false;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngState derive_stream(std::uint64_t master_seed, std::string_view sample_id,
                       std::int64_t epoch, std::string_view op_tag) {
  if (!known_tag(op_tag)) {
    throw Error(ErrorCode::kUnknownTag, "unknown stream tag '" + std::string(op_tag) + "'");
  }
  std::string key;
  key.reserve(sample_id.size() + op_tag.size() + 24);
  key.append(sample_id).append("/").append(std::to_string(epoch)).append("/").append(op_tag);
  // Seed and key hash are each mixed before combining so that nearby seeds
  // and nearby hashes land far apart.
  const std::uint64_t seed_mix = splitmix_next(RngState{master_seed}).value;
  const std::uint64_t combined = seed_mix ^ fnv1a64(key);
  return RngState{splitmix_next(RngState{combined}).value};
}

UniformDraw uniform(RngState rng, double lo, double hi) {
  if (lo > hi) {
    throw Error(ErrorCode::kInvalidArgument, "uniform: lo > hi");
  }
  const Draw d = splitmix_next(rng);
  if (lo == hi) return {lo, d.next};
  const double u = static_cast<double>(d.value >> 11) * 0x1.0p-53;
  double x = lo + (hi - lo) * u;
  // u < 1, but lo + (hi-lo)*u can still round up to hi; keep the closed range.
  if (x > hi) x = hi;
  return {x, d.next};
}

double Rng::uniform(double lo, double hi) {
  const UniformDraw d = sizeaug::uniform(state_, lo, hi);
  state_ = d.next;
  return d.x;
}

double Rng::normal() {
  // 1 - unit() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - unit();
  const double u2 = unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

}  // namespace sizeaug
