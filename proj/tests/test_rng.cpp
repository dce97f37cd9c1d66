#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "eventformer/rng.hpp"

using evf::CounterRng;

TEST_CASE("same key and counter always give the same stream") {
  CounterRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CounterRng c(42);
  c.skip_to(57);
  CounterRng d(42);
  for (int i = 0; i < 57; ++i) d.next_u64();
  CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("different keys decorrelate streams") {
  CounterRng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform_at is a pure function of (key, counter)") {
  const double x = CounterRng::uniform_at(9, 3);
  CHECK(x == CounterRng::uniform_at(9, 3));
  CHECK(x != CounterRng::uniform_at(9, 4));
  CHECK(x >= 0.0);
  CHECK(x < 1.0);
}

TEST_CASE("mix differs under argument swap") {
  CHECK(CounterRng::mix(1, 2) != CounterRng::mix(2, 1));
  CHECK(CounterRng::mix(1, 2, 3) != CounterRng::mix(3, 2, 1));
}

TEST_CASE("uniform stays in range and covers it") {
  CounterRng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x = r.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_int is inclusive of both ends") {
  CounterRng r(11);
  std::set<int64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const int64_t v = r.uniform_int(2, 5);
    CHECK(v >= 2);
    CHECK(v <= 5);
    seen.insert(v);
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("normal consumes exactly two counter steps") {
  CounterRng a(5);
  (void)a.normal();
  CounterRng b(5);
  b.skip_to(2);
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("normal moments are plausible at a fixed seed") {
  CounterRng r(13);
  const int n = 20000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("poisson mean tracks the parameter") {
  CounterRng r(17);
  const int n = 20000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(r.poisson(3.5));
  CHECK(std::abs(sum / n - 3.5) < 0.1);
}
