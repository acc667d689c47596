#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "cvar/model.hpp"

namespace cvar {

// A sampled estimate of the CVaR gradient plus the diagnostics the optimizer
// logs and the acceptance tests assert on.
struct GradientEstimate {
  Eigen::VectorXd grad;
  double var_used = 0.0;        // empirical alpha-quantile used as baseline
  std::int64_t tail_count = 0;  // samples with indicator one
  std::int64_t n = 0;           // batch size
};

// Tail-restricted likelihood-ratio estimate of the CVaR gradient:
//
//   grad_j = 1/(alpha N) * sum_i score_j(i) * (r_i - var) * 1{i in tail}
//
// where var is the empirical alpha-quantile of the batch rewards and the
// tail is the ceil(alpha N) smallest rewards in sorted-stable order. The
// quantile baseline is what makes the estimate consistent; see
// naive_tail_lr_estimate for the broken variant. Summation is fixed
// left-to-right in sample order, so results are bit-stable.
GradientEstimate gcvar_estimate(std::span<const ScoredSample> samples, double alpha);

// The same tail average without the quantile baseline, i.e. (r_i - var)
// replaced by r_i. Inconsistent by design; provided for ablation tests only.
GradientEstimate naive_tail_lr_estimate(std::span<const ScoredSample> samples, double alpha);

// Standard likelihood-ratio estimate of d/dtheta E[R] with the batch mean
// as baseline: grad_j = 1/N sum_i score_j(i) * (r_i - mean). The comparison
// trainer ("plain policy gradient") uses this.
GradientEstimate plain_lr_estimate(std::span<const ScoredSample> samples);

struct BiasStudyRow {
  std::int64_t n = 0;
  double mean_abs_bias = 0.0;
};

// For each batch size, runs `replications` independent gcvar_estimate calls
// and reports the deviation of the replication-mean estimate from the given
// true gradient (componentwise absolute error, averaged over components).
std::vector<BiasStudyRow> bias_study(const Model& model, const ParamVector& theta,
                                     double alpha, std::span<const std::int64_t> batch_sizes,
                                     int replications, const Eigen::VectorXd& true_grad,
                                     std::uint64_t seed, int n_threads = 1);

// Least-squares slope of log(mean_abs_bias) against log(n).
double loglog_slope(std::span<const BiasStudyRow> rows);

}  // namespace cvar
