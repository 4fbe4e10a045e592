#include "creaseforge/rng.hpp"

#include <doctest.h>

#include <set>

using creaseforge::RandomStream;

TEST_CASE("streams are a pure function of seed and path") {
  RandomStream a = RandomStream(42).child("sample").child(7);
  RandomStream b = RandomStream(42).child("sample").child(7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a.path() == "42/sample/7");
}

TEST_CASE("children do not depend on draws made by the parent") {
  RandomStream parent(9);
  const auto before = parent.child("x");
  for (int i = 0; i < 1000; ++i) parent.normal();
  const auto after = parent.child("x");
  CHECK(before.key() == after.key());
}

TEST_CASE("distinct paths give distinct streams") {
  RandomStream root(1);
  std::set<std::uint64_t> keys;
  for (std::uint64_t i = 0; i < 1000; ++i) keys.insert(root.child(i).key());
  keys.insert(root.child("1").key());
  keys.insert(root.child("a").child("b").key());
  keys.insert(root.child("b").child("a").key());
  keys.insert(RandomStream(2).key());
  CHECK(keys.size() == 1004);
}

TEST_CASE("uniform draws stay in range") {
  RandomStream s(3);
  bool lo_seen = false, hi_seen = false;
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = s.uniform_int(2, 5);
    CHECK(k >= 2);
    CHECK(k <= 5);
    lo_seen |= k == 2;
    hi_seen |= k == 5;
  }
  CHECK(lo_seen);
  CHECK(hi_seen);
}

TEST_CASE("normal draws have unit moments") {
  RandomStream s(4);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  // 5 standard errors
  CHECK(std::abs(mean) < 5.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - mean * mean - 1.0) < 5.0 * std::sqrt(2.0 / n));
}
