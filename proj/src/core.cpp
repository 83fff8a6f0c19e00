#include "lesionseg/core.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <limits>
#include <numeric>
#include <thread>

namespace lesionseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Finite "no source here" sentinel: +inf would make the parabola
// intersection below NaN on rows without any set pixel.
constexpr double kFar = 1e20;

// 1-D squared distance transform (lower envelope of parabolas).
void dt_1d(const double* f, int n, double* out, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const int p = v[k];
    out[q] = (q - p) * (q - p) + f[p];
  }
}

}  // namespace

Image squared_distance_transform(const ByteImage& set) {
  const int h = static_cast<int>(set.rows());
  const int w = static_cast<int>(set.cols());
  Image d(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d(y, x) = set(y, x) ? 0.0 : kFar;

  const int n = std::max(w, h);
  std::vector<double> f(n), out(n), z(n + 1);
  std::vector<int> v(n);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = d(y, x);
    dt_1d(f.data(), w, out.data(), v.data(), z.data());
    for (int x = 0; x < w; ++x) d(y, x) = out[x];
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = d(y, x);
    dt_1d(f.data(), h, out.data(), v.data(), z.data());
    for (int y = 0; y < h; ++y) d(y, x) = out[y];
  }
  return d;
}

ByteImage select_smallest(const Image& key, int count) {
  ByteImage all = ByteImage::Constant(key.rows(), key.cols(), 1);
  return select_smallest(key, count, all);
}

ByteImage select_smallest(const Image& key, int count, const ByteImage& candidates) {
  const int h = static_cast<int>(key.rows());
  const int w = static_cast<int>(key.cols());
  std::vector<std::pair<double, int>> order;
  order.reserve(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (candidates(y, x)) order.emplace_back(key(y, x), linear_index(x, y, w));
  std::sort(order.begin(), order.end());

  ByteImage out = ByteImage::Zero(h, w);
  const int take = std::min<int>(count, static_cast<int>(order.size()));
  for (int i = 0; i < take; ++i) {
    const int idx = order[static_cast<std::size_t>(i)].second;
    out(idx / w, idx % w) = 1;
  }
  return out;
}

Eigen::ArrayXXi connected_components(const ByteImage& set, int* n_components) {
  const int h = static_cast<int>(set.rows());
  const int w = static_cast<int>(set.cols());
  Eigen::ArrayXXi labels = Eigen::ArrayXXi::Zero(h, w);
  int next = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!set(y, x) || labels(y, x)) continue;
      ++next;
      labels(y, x) = next;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (!set(ny, nx) || labels(ny, nx)) continue;
            labels(ny, nx) = next;
            queue.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  if (n_components) *n_components = next;
  return labels;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  std::atomic<int> cursor{0};
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      while (true) {
        const int i = cursor.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& worker : workers) worker.join();
}

}  // namespace lesionseg
