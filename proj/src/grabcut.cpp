#include "lesionseg/grabcut.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace lesionseg {

namespace {

struct NeighborOffset {
  int dx, dy;
  double dist;
};

/// Unordered neighbor pairs: each (m, n) visited once via positive offsets.
std::vector<NeighborOffset> neighbor_offsets(int connectivity) {
  if (connectivity == 4) return {{1, 0, 1.0}, {0, 1, 1.0}};
  if (connectivity == 8) return {{1, 0, 1.0}, {0, 1, 1.0}, {1, 1, M_SQRT2}, {1, -1, M_SQRT2}};
  throw std::invalid_argument("grabcut: connectivity must be 4 or 8");
}

template <typename Fn>
void for_each_pair(const Image& img, int connectivity, Fn&& fn) {
  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());
  for (const auto& o : neighbor_offsets(connectivity)) {
    for (int y = 0; y < h; ++y) {
      const int ny = y + o.dy;
      if (ny < 0 || ny >= h) continue;
      for (int x = 0; x < w; ++x) {
        const int nx = x + o.dx;
        if (nx < 0 || nx >= w) continue;
        fn(x, y, nx, ny, o.dist);
      }
    }
  }
}

Eigen::ArrayXd samples_where(const Image& img, const ByteImage& labels, std::uint8_t value) {
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(img.size()));
  for (Eigen::Index i = 0; i < img.size(); ++i)
    if (labels.data()[i] == value) vals.push_back(img.data()[i]);
  return Eigen::Map<const Eigen::ArrayXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

double pairwise_beta(const Image& img, int connectivity) {
  double sum = 0.0;
  std::int64_t count = 0;
  for_each_pair(img, connectivity, [&](int x, int y, int nx, int ny, double) {
    const double d = img(y, x) - img(ny, nx);
    sum += d * d;
    ++count;
  });
  if (count == 0 || sum <= 0.0) return 1.0;  // constant image: scale is arbitrary
  return 1.0 / (2.0 * sum / static_cast<double>(count));
}

double grabcut_energy(const Image& img, const ByteImage& labels, const GmmModel& fg, const GmmModel& bg, double beta, const GrabCutParams& params) {
  if (labels.rows() != img.rows() || labels.cols() != img.cols())
    throw std::invalid_argument("grabcut_energy: label shape differs from image");

  double unary = 0.0;
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double z = img.data()[i];
    unary -= labels.data()[i] ? log_likelihood(fg, z) : log_likelihood(bg, z);
  }

  double pairwise = 0.0;
  for_each_pair(img, params.connectivity, [&](int x, int y, int nx, int ny, double dist) {
    if (labels(y, x) == labels(ny, nx)) return;
    const double d = img(y, x) - img(ny, nx);
    pairwise += std::exp(-beta * d * d) / dist;
  });
  return unary + params.gamma * pairwise;
}

ByteImage grabcut(const RoiImage& roi, const SeedMask& seeds, const GrabCutParams& params, std::vector<double>* energy_trace) {
  const Image& img = roi.pixels;
  const int w = roi.width();
  const int h = roi.height();
  const int n = w * h;
  if (seeds.rows() != h || seeds.cols() != w) throw std::invalid_argument("grabcut: seed shape differs from ROI");
  if (params.max_iters < 1 || params.gmm_components < 1 || params.gamma < 0.0)
    throw std::invalid_argument("grabcut: invalid parameters");
  if (count_label(seeds, seed::kFG) == 0 || count_label(seeds, seed::kBG) == 0)
    throw std::invalid_argument("grabcut: seeds must contain at least one FG and one BG pixel");

  const double beta = pairwise_beta(img, params.connectivity);

  // Initial labeling from the quadmap; hard seeds never change afterwards.
  ByteImage labels(h, w);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const auto s = seeds.data()[i];
    labels.data()[i] = (s == seed::kFG || s == seed::kPFG) ? 1 : 0;
  }

  GmmModel fg_model, bg_model;
  bool have_models = false;
  Rng rng(0);
  double prev_energy = 0.0;

  for (int iter = 0; iter < params.max_iters; ++iter) {
    const Eigen::ArrayXd fg_samples = samples_where(img, labels, 1);
    const Eigen::ArrayXd bg_samples = samples_where(img, labels, 0);

    if (!have_models) {
      const int k_fg = std::min<int>(params.gmm_components, static_cast<int>(fg_samples.size()));
      const int k_bg = std::min<int>(params.gmm_components, static_cast<int>(bg_samples.size()));
      fg_model = fit_em(fg_samples, k_fg, rng);
      bg_model = fit_em(bg_samples, k_bg, rng);
      have_models = true;
    } else {
      // Warm start from the previous mixtures: the refit cannot lower the
      // class likelihoods, which keeps the energy trace non-increasing.
      fg_model = refit_em(fg_samples, fg_model);
      bg_model = refit_em(bg_samples, bg_model);
    }

    FlowNetwork net(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int m = linear_index(x, y, w);
        const auto s = seeds(y, x);
        if (s == seed::kFG) {
          net.add_terminal(m, kHardCap, 0.0);
        } else if (s == seed::kBG) {
          net.add_terminal(m, 0.0, kHardCap);
        } else {
          // Shift both caps by the same amount so neither is negative; a
          // per-node shift moves every feasible cut equally.
          const double to_bg = -log_likelihood(bg_model, img(y, x));
          const double to_fg = -log_likelihood(fg_model, img(y, x));
          const double base = std::min(to_bg, to_fg);
          net.add_terminal(m, to_bg - base, to_fg - base);
        }
      }
    }
    for_each_pair(img, params.connectivity, [&](int x, int y, int nx, int ny, double dist) {
      const double d = img(y, x) - img(ny, nx);
      const double cap = params.gamma * std::exp(-beta * d * d) / dist;
      if (cap > 0.0) net.add_edge(linear_index(x, y, w), linear_index(nx, ny, w), cap, cap);
    });

    const MaxFlowResult cut = max_flow(net);
    // Graph nodes are numbered x-fastest; index the image in 2-D rather
    // than through data(), whose storage order is column-major.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        labels(y, x) = cut.side[static_cast<std::size_t>(linear_index(x, y, w))] == CutSide::kSource ? 1 : 0;
    // Re-pin the seeds; the hard caps make violations unreachable in practice.
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (seeds.data()[i] == seed::kFG) labels.data()[i] = 1;
      if (seeds.data()[i] == seed::kBG) labels.data()[i] = 0;
    }

    const double energy = grabcut_energy(img, labels, fg_model, bg_model, beta, params);
    if (energy_trace) energy_trace->push_back(energy);
    if (iter > 0) {
      const double drop = prev_energy - energy;
      if (drop < params.energy_tol * std::max(std::abs(prev_energy), 1.0)) break;
    }
    prev_energy = energy;
  }
  return labels;
}

}  // namespace lesionseg
