#include "doctest.h"

#include "kcmlab/rng.hpp"

#include <cmath>
#include <vector>

using namespace kcmlab;

TEST_CASE("replica streams are reproducible and distinct") {
  Rng a = Rng::stream(42, 7);
  Rng b = Rng::stream(42, 7);
  Rng c = Rng::stream(42, 8);
  bool all_equal = true, any_diff_from_c = false;
  for (int i = 0; i < 1000; ++i) {
    auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    all_equal = all_equal && (x == y);
    any_diff_from_c = any_diff_from_c || (x != z);
  }
  CHECK(all_equal);
  CHECK(any_diff_from_c);
}

TEST_CASE("uniform01 stays in [0,1) with the right mean") {
  Rng rng(123);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // 4 sigma band around 1/2, sigma = 1/sqrt(12 n)
  CHECK(std::abs(sum / n - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("exponential has the right mean and is always positive") {
  Rng rng(99);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double e = rng.exponential(2.0);
    REQUIRE(e >= 0.0);
    sum += e;
  }
  CHECK(std::abs(sum / n - 0.5) < 4.0 * 0.5 / std::sqrt(n));
}

TEST_CASE("uniform_index covers the range uniformly") {
  Rng rng(7);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(10)];
  for (int c : counts) CHECK(std::abs(c - n / 10) < 5 * std::sqrt(n / 10.0));
}
