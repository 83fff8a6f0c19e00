#pragma once

#include "lesionseg/core.hpp"

namespace lesionseg {

/// Variance floor on normalized intensities; keeps constant regions from
/// producing singular components.
inline constexpr double kGmmVarianceFloor = 1e-4;

/// Scalar Gaussian mixture: weights sum to 1, variances >= floor.
struct GmmModel {
  Eigen::ArrayXd weights;
  Eigen::ArrayXd means;
  Eigen::ArrayXd variances;

  int components() const { return static_cast<int>(weights.size()); }
};

/// EM from k-quantile initialization until the log-likelihood gain drops
/// below 1e-6 or 100 iterations. `rng` is reserved for degenerate
/// tie-breaking; the quantile path is fully deterministic. When given,
/// `ll_trace` records the total log-likelihood per iteration
/// (non-decreasing).
GmmModel fit_em(const Eigen::ArrayXd& samples, int k, Rng& rng, std::vector<double>* ll_trace = nullptr);

/// EM continued from an existing model; the refit never lowers the total
/// log-likelihood of `samples` below that of `init`.
GmmModel refit_em(const Eigen::ArrayXd& samples, const GmmModel& init, std::vector<double>* ll_trace = nullptr);

/// log sum_j w_j N(x; mu_j, sigma_j^2).
double log_likelihood(const GmmModel& m, double x);

double total_log_likelihood(const GmmModel& m, const Eigen::ArrayXd& samples);

}  // namespace lesionseg
