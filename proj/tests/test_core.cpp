#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "lesionseg/core.hpp"

using namespace lesionseg;

TEST_CASE("linear_index is x-fastest") {
  CHECK(linear_index(0, 0, 7) == 0);
  CHECK(linear_index(3, 0, 7) == 3);
  CHECK(linear_index(0, 1, 7) == 7);
  CHECK(linear_index(2, 4, 7) == 30);
}

TEST_CASE("rng streams are reproducible") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng uniform stays in range") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform(-3.0, 5.0);
    CHECK(v >= -3.0);
    CHECK(v < 5.0);
    CHECK(rng.uniform_int(10) < 10);
  }
}

TEST_CASE("rng normal has standard moments") {
  Rng rng(11);
  const int n = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
  Rng shifted(11);
  Rng base(11);
  CHECK(shifted.normal(2.0, 3.0) == doctest::Approx(2.0 + 3.0 * base.normal()).epsilon(1e-12));
}

TEST_CASE("rng fork yields independent reproducible streams") {
  const Rng root(42);
  Rng a = root.fork(0);
  Rng b = root.fork(1);
  CHECK(a.next_u64() != b.next_u64());
  Rng a2 = root.fork(0);
  a = root.fork(0);
  for (int i = 0; i < 20; ++i) CHECK(a.next_u64() == a2.next_u64());
}

TEST_CASE("rng shuffle permutes") {
  std::vector<int> items(50);
  std::iota(items.begin(), items.end(), 0);
  Rng rng(5);
  rng.shuffle(items);
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  CHECK(items != sorted);  // 50! permutations; identity is astronomically unlikely
}

namespace {

// Quadratic-time reference for the distance transform.
Image brute_sqdist(const ByteImage& set) {
  const int h = static_cast<int>(set.rows());
  const int w = static_cast<int>(set.cols());
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (int sy = 0; sy < h; ++sy)
        for (int sx = 0; sx < w; ++sx)
          if (set(sy, sx)) best = std::min(best, static_cast<double>((x - sx) * (x - sx) + (y - sy) * (y - sy)));
      out(y, x) = best;
    }
  return out;
}

}  // namespace

TEST_CASE("squared_distance_transform single point") {
  ByteImage set = ByteImage::Zero(5, 7);
  set(2, 3) = 1;
  const Image d = squared_distance_transform(set);
  CHECK(d(2, 3) == 0.0);
  CHECK(d(2, 4) == 1.0);
  CHECK(d(0, 0) == doctest::Approx(9.0 + 4.0));
  CHECK(d(4, 6) == doctest::Approx(9.0 + 4.0));
}

TEST_CASE("squared_distance_transform matches brute force") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 3 + static_cast<int>(rng.uniform_int(12));
    const int w = 3 + static_cast<int>(rng.uniform_int(12));
    ByteImage set = ByteImage::Zero(h, w);
    int marks = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (rng.uniform() < 0.15) {
          set(y, x) = 1;
          ++marks;
        }
    if (marks == 0) set(static_cast<int>(rng.uniform_int(h)), static_cast<int>(rng.uniform_int(w))) = 1;
    const Image fast = squared_distance_transform(set);
    const Image slow = brute_sqdist(set);
    CHECK((fast - slow).abs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("select_smallest picks by key with index tie-break") {
  Image key(2, 3);
  key << 5, 1, 5,
         0, 5, 5;
  const ByteImage sel = select_smallest(key, 3);
  CHECK(static_cast<int>((sel != 0).count()) == 3);
  CHECK(sel(1, 0) == 1);  // key 0
  CHECK(sel(0, 1) == 1);  // key 1
  // Four pixels tie at key 5; the lowest linear index (x=0, y=0) wins.
  CHECK(sel(0, 0) == 1);
  CHECK(sel(0, 2) == 0);

  SUBCASE("candidate restriction") {
    ByteImage cand = ByteImage::Zero(2, 3);
    cand(0, 2) = 1;
    cand(1, 1) = 1;
    const ByteImage sel2 = select_smallest(key, 1, cand);
    CHECK(static_cast<int>((sel2 != 0).count()) == 1);
    CHECK(sel2(0, 2) == 1);  // ties at 5: linear index 2 < 4
  }

  SUBCASE("count larger than pixel budget selects everything") {
    const ByteImage all = select_smallest(key, 100);
    CHECK(static_cast<int>((all != 0).count()) == 6);
  }
}

TEST_CASE("connected_components 8-connectivity") {
  //  A . . B
  //  . A . .
  //  . . A .    diagonal chain is one component
  ByteImage set = ByteImage::Zero(3, 4);
  set(0, 0) = set(1, 1) = set(2, 2) = 1;
  set(0, 3) = 1;
  int n = 0;
  const Eigen::ArrayXXi labels = connected_components(set, &n);
  CHECK(n == 2);
  CHECK(labels(0, 0) == 1);  // scan order: first component seen gets label 1
  CHECK(labels(1, 1) == 1);
  CHECK(labels(2, 2) == 1);
  CHECK(labels(0, 3) == 2);
  CHECK(labels(0, 1) == 0);
}

TEST_CASE("connected_components empty set") {
  int n = -1;
  const Eigen::ArrayXXi labels = connected_components(ByteImage::Zero(4, 4), &n);
  CHECK(n == 0);
  CHECK((labels == 0).all());
}

TEST_CASE("parallel_for covers every index once") {
  for (int jobs : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(100);
    for (auto& h : hits) h = 0;
    parallel_for(100, jobs, [&](int i) { hits[static_cast<std::size_t>(i)]++; });
    for (const auto& h : hits) CHECK(h == 1);
  }
  parallel_for(0, 4, [](int) { CHECK(false); });  // empty range runs nothing
}
