#include "doctest.h"

#include <cmath>

#include "puffline/rng.hpp"

using namespace puffline;

TEST_CASE("same seed reproduces the stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
}

TEST_CASE("uniform01 stays in [0, 1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_index covers the range") {
  Rng rng(9);
  bool seen[5] = {};
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.uniform_index(5);
    REQUIRE(v < 5);
    seen[v] = true;
  }
  for (bool s : seen) CHECK(s);
}

TEST_CASE("normal has roughly standard moments") {
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("derive_seed separates tags and indices") {
  const auto a = derive_seed(1, "alpha", 0, 0);
  CHECK(derive_seed(1, "alpha", 0, 0) == a);
  CHECK(derive_seed(1, "beta", 0, 0) != a);
  CHECK(derive_seed(2, "alpha", 0, 0) != a);
  CHECK(derive_seed(1, "alpha", 1, 0) != a);
  CHECK(derive_seed(1, "alpha", 0, 1) != a);
  CHECK(derive_seed(1, "alpha", 1, 2) != derive_seed(1, "alpha", 2, 1));
}
