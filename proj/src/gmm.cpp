#include "lesionseg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lesionseg {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kLlTolerance = 1e-6;
constexpr int kMaxEmIterations = 100;

void validate_model(const GmmModel& m) {
  const auto k = m.weights.size();
  if (k < 1 || m.means.size() != k || m.variances.size() != k)
    throw std::invalid_argument("gmm: model arrays must share a positive size");
  if ((m.variances < kGmmVarianceFloor - 1e-15).any())
    throw std::invalid_argument("gmm: variance below floor");
}

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

/// One E-step: fills resp (n x k, rows sum to 1) and returns the total
/// log-likelihood of the current model.
double e_step(const GmmModel& m, const Eigen::ArrayXd& samples, Eigen::ArrayXXd& resp) {
  const int n = static_cast<int>(samples.size());
  const int k = m.components();
  resp.resize(n, k);
  Eigen::ArrayXd log_w(k);
  for (int j = 0; j < k; ++j)
    log_w(j) = m.weights(j) > 0.0 ? std::log(m.weights(j)) : -std::numeric_limits<double>::infinity();

  double total = 0.0;
  Eigen::ArrayXd row(k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) row(j) = log_w(j) + log_normal(samples(i), m.means(j), m.variances(j));
    const double hi = row.maxCoeff();
    const double lse = hi + std::log((row - hi).exp().sum());
    resp.row(i) = (row - lse).exp();
    total += lse;
  }
  return total;
}

/// M-step with variance flooring. Components that lose all responsibility
/// keep their parameters at zero weight.
GmmModel m_step(const Eigen::ArrayXd& samples, const Eigen::ArrayXXd& resp, const GmmModel& prev) {
  const int n = static_cast<int>(samples.size());
  const int k = prev.components();
  GmmModel next = prev;
  for (int j = 0; j < k; ++j) {
    const double nj = resp.col(j).sum();
    if (nj <= 1e-12 * n) {
      next.weights(j) = 0.0;
      continue;
    }
    next.weights(j) = nj / n;
    const double mu = (resp.col(j) * samples).sum() / nj;
    const double var = (resp.col(j) * (samples - mu).square()).sum() / nj;
    next.means(j) = mu;
    next.variances(j) = std::max(var, kGmmVarianceFloor);
  }
  const double wsum = next.weights.sum();
  if (wsum <= 0.0) throw std::runtime_error("gmm: all components collapsed");
  next.weights /= wsum;
  return next;
}

GmmModel run_em(const Eigen::ArrayXd& samples, GmmModel model, std::vector<double>* ll_trace) {
  Eigen::ArrayXXd resp;
  double prev_ll = -std::numeric_limits<double>::infinity();
  GmmModel prev_model = model;
  for (int it = 0; it < kMaxEmIterations; ++it) {
    const double ll = e_step(model, samples, resp);
    if (ll < prev_ll) {
      // Variance flooring can break the EM ascent guarantee; keep the best
      // model seen and stop rather than record a decreasing trace.
      model = prev_model;
      break;
    }
    if (ll_trace) ll_trace->push_back(ll);
    if (it > 0 && ll - prev_ll < kLlTolerance) break;
    prev_ll = ll;
    prev_model = model;
    model = m_step(samples, resp, model);
  }
  return model;
}

}  // namespace

GmmModel fit_em(const Eigen::ArrayXd& samples, int k, Rng& rng, std::vector<double>* ll_trace) {
  (void)rng;
  const int n = static_cast<int>(samples.size());
  if (k < 1) throw std::invalid_argument("gmm: component count must be positive");
  if (n < k) throw std::invalid_argument("gmm: need at least one sample per component");

  std::vector<double> sorted(samples.data(), samples.data() + n);
  std::sort(sorted.begin(), sorted.end());

  GmmModel model;
  model.weights = Eigen::ArrayXd::Constant(k, 1.0 / k);
  model.means.resize(k);
  model.variances.resize(k);
  const double mean_all = samples.mean();
  const double var_all = std::max((samples - mean_all).square().mean(), kGmmVarianceFloor);
  for (int j = 0; j < k; ++j) {
    int idx = static_cast<int>((j + 0.5) * n / k);
    idx = std::clamp(idx, 0, n - 1);
    model.means(j) = sorted[static_cast<std::size_t>(idx)];
    model.variances(j) = var_all;
  }
  // Coincident quantiles (heavily repeated values) collapse to one basin;
  // spread them by a negligible deterministic offset.
  for (int j = 1; j < k; ++j)
    if (model.means(j) <= model.means(j - 1)) model.means(j) = model.means(j - 1) + 1e-9;

  return run_em(samples, model, ll_trace);
}

GmmModel refit_em(const Eigen::ArrayXd& samples, const GmmModel& init, std::vector<double>* ll_trace) {
  validate_model(init);
  if (samples.size() < 1) throw std::invalid_argument("gmm: refit needs samples");
  return run_em(samples, init, ll_trace);
}

double log_likelihood(const GmmModel& m, double x) {
  const int k = m.components();
  double hi = -std::numeric_limits<double>::infinity();
  Eigen::ArrayXd row(k);
  for (int j = 0; j < k; ++j) {
    row(j) = m.weights(j) > 0.0 ? std::log(m.weights(j)) + log_normal(x, m.means(j), m.variances(j))
                                : -std::numeric_limits<double>::infinity();
    hi = std::max(hi, row(j));
  }
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((row - hi).exp().sum());
}

double total_log_likelihood(const GmmModel& m, const Eigen::ArrayXd& samples) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) total += log_likelihood(m, samples(i));
  return total;
}

}  // namespace lesionseg
