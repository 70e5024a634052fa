/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <doctest.h>

#include <cstdint>
#include <set>

#include "sizeaug/error.hpp"
#include "sizeaug/rng.hpp"

using namespace sizeaug;

namespace {

// Reference mix written out step by step, kept apart from the library's constexpr version.
std::uint64_t oracle_first_value(std::uint64_t state) {
  std::uint64_t z = state + 0x9E3779B97F4A7C15ULL;
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

std::uint64_t oracle_fnv(const char* s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (; *s; ++s) {
    h ^= static_cast<unsigned char>(*s);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST_SUITE("rng") {
  TEST_CASE("splitmix first value from state zero") {
    const Draw d = splitmix_next(RngState{0});
    CHECK(d.value == 0xE220A8397B1DCDAFULL);
    CHECK(d.value == oracle_first_value(0));
    CHECK(d.next.state == 0x9E3779B97F4A7C15ULL);
  }

  TEST_CASE("splitmix advances and is pure") {
    const Draw a = splitmix_next(RngState{0});
    const Draw b = splitmix_next(a.next);
    CHECK(a.value != b.value);
    const Draw again = splitmix_next(RngState{0});
    CHECK(again.value == a.value);
    CHECK(again.next == a.next);
    for (std::uint64_t s : {1ULL, 42ULL, 0xDEADBEEFULL}) {
      CHECK(splitmix_next(RngState{s}).value == oracle_first_value(s));
    }
  }

  TEST_CASE("fnv1a64 matches reference") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
    CHECK(fnv1a64("s1/0/rotation") == oracle_fnv("s1/0/rotation"));
  }

  TEST_CASE("derive_stream purity and separation") {
    const RngState a = derive_stream(7, "s1", 0, "rotation");
    CHECK(a == derive_stream(7, "s1", 0, "rotation"));
    CHECK(a != derive_stream(7, "s1", 0, "contrast"));
    CHECK(a != derive_stream(7, "s1", 1, "rotation"));
    CHECK(a != derive_stream(7, "s2", 0, "rotation"));
    CHECK(a != derive_stream(8, "s1", 0, "rotation"));

    std::set<std::uint64_t> states;
    for (const char* tag : {"rotation", "contrast", "zoom", "synth", "dropout", "init", "shuffle"}) {
      states.insert(derive_stream(7, "s1", 0, tag).state);
    }
    CHECK(states.size() == 7);
  }

  TEST_CASE("derive_stream rejects unknown tags") {
    try {
      derive_stream(7, "s1", 0, "badtag");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kUnknownTag);
    }
  }

  TEST_CASE("uniform degenerate range and bounds") {
    CHECK(uniform(RngState{5}, 0.3, 0.3).x == 0.3);
    CHECK_THROWS_AS(uniform(RngState{5}, 1.0, 0.0), Error);
    RngState s{11};
    for (int i = 0; i < 10000; ++i) {
      const UniformDraw d = uniform(s, -0.5, 0.5);
      CHECK_GE(d.x, -0.5);
      CHECK_LE(d.x, 0.5);
      s = d.next;
    }
  }

  TEST_CASE("uniform mean over many draws") {
    RngState s{3};
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const UniformDraw d = uniform(s, 0.0, 1.0);
      sum += d.x;
      s = d.next;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(sum / n - 0.5) < 0.01);
  }

  TEST_CASE("normal moments and bounded integers") {
    Rng rng(RngState{9});
    double sum = 0.0, sq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      sum += z;
      sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sq / n - 1.0) < 0.03);
    int counts[5] = {};
    for (int i = 0; i < 50000; ++i) ++counts[rng.below(5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 400);
  }
}
