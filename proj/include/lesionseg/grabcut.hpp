#pragma once

#include "lesionseg/gmm.hpp"
#include "lesionseg/maxflow.hpp"
#include "lesionseg/seeds.hpp"

namespace lesionseg {

struct GrabCutParams {
  double gamma = 50.0;       // pairwise strength
  int gmm_components = 5;    // per class, capped at the class sample count
  int max_iters = 5;
  int connectivity = 8;      // 4 or 8
  double energy_tol = 1e-3;  // relative energy decrease that counts as converged
};

/// Contrast scale: 1 / (2 * mean squared neighbor difference), or 1 on a
/// constant image where that mean vanishes.
double pairwise_beta(const Image& img, int connectivity);

/// E(Y, G) = sum_m -log p(z_m | G_{y_m})
///         + gamma * sum_{(m,n)} [y_m != y_n] exp(-beta dz^2) / dist(m, n).
double grabcut_energy(const Image& img, const ByteImage& labels, const GmmModel& fg, const GmmModel& bg, double beta, const GrabCutParams& params);

/// Iterative GMM + min-cut segmentation from a seed quadmap. FG/BG seeds
/// are hard constraints; PFG/PBG only pick the initial side. The recorded
/// per-iteration energies are non-increasing.
ByteImage grabcut(const RoiImage& roi, const SeedMask& seeds, const GrabCutParams& params, std::vector<double>* energy_trace = nullptr);

}  // namespace lesionseg
