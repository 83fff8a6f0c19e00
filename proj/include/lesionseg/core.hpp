#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lesionseg {

// Dense pixel grids are Eigen arrays indexed (row = y, col = x).
using Image = Eigen::ArrayXXd;
using ByteImage = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using BoolImage = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Vec2 = Eigen::Vector2d;

// Linear pixel index convention: x-fastest, idx = y * width + x.
inline int linear_index(int x, int y, int width) { return y * width + x; }

/// Deterministic RNG: xorshift64* core with hand-rolled distributions so
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(split_mix(seed)) {}

  std::uint64_t next_u64() {
    // xorshift64* keeps the generator self-contained and portable.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform real in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (one value per call, cached pair).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Derive an independent stream, e.g. one per pipeline stage.
  Rng fork(std::uint64_t salt) const { return Rng(split_mix(state_ ^ (0x9E3779B97F4A7C15ULL * (salt + 1)))); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[static_cast<std::size_t>(uniform_int(i))]);
    }
  }

 private:
  static std::uint64_t split_mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    x = x ^ (x >> 31);
    return x == 0 ? 0x106689D45497FDB5ULL : x;
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Exact squared Euclidean distance transform of a pixel set
/// (Felzenszwalb-Huttenlocher two-pass). Pixels where `set != 0` get 0.
Image squared_distance_transform(const ByteImage& set);

/// Marks the `count` pixels with the smallest key, ties broken by linear
/// index. Used to realise "dilate until the area hits X%" exactly.
ByteImage select_smallest(const Image& key, int count);

/// Same, restricted to pixels where `candidates != 0`.
ByteImage select_smallest(const Image& key, int count, const ByteImage& candidates);

/// 8-connected component labels (0 = not in set, labels start at 1,
/// assigned in scan order).
Eigen::ArrayXXi connected_components(const ByteImage& set, int* n_components);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to per-index slots; the call returns after all complete.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace lesionseg
