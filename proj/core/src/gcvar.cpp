#include "cvar/gcvar.hpp"

#include <cmath>
#include <stdexcept>

#include "cvar/empirical_risk.hpp"

namespace cvar {
namespace {

std::vector<double> extract_rewards(std::span<const ScoredSample> samples) {
  std::vector<double> rewards;
  rewards.reserve(samples.size());
  for (const auto& s : samples) rewards.push_back(s.reward);
  return rewards;
}

int common_param_dim(std::span<const ScoredSample> samples) {
  if (samples.empty()) throw std::invalid_argument("estimator rejects an empty batch");
  const auto k = samples.front().score.size();
  for (const auto& s : samples) {
    if (s.score.size() != k) throw std::invalid_argument("inconsistent score lengths in batch");
    if (!s.score.allFinite() || !std::isfinite(s.reward)) {
      throw std::invalid_argument("batch has non-finite rewards or scores");
    }
  }
  return static_cast<int>(k);
}

// Shared body of the two tail estimators; `use_baseline` subtracts the
// empirical quantile from the reward factor.
GradientEstimate tail_lr_estimate(std::span<const ScoredSample> samples, double alpha,
                                  bool use_baseline) {
  const int k = common_param_dim(samples);
  validate_alpha(alpha);
  const std::size_t n = samples.size();

  const auto rewards = extract_rewards(samples);
  const std::size_t m = tail_count(alpha, n);
  const auto order = ascending_order(rewards);
  const double var_used = rewards[order[m - 1]];

  std::vector<char> in_tail(n, 0);
  for (std::size_t pos = 0; pos < m; ++pos) in_tail[order[pos]] = 1;

  const double scale = 1.0 / (alpha * static_cast<double>(n));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_tail[i]) continue;
    const double factor = use_baseline ? (rewards[i] - var_used) : rewards[i];
    grad += samples[i].score * (factor * scale);
  }

  GradientEstimate est;
  est.grad = std::move(grad);
  est.var_used = var_used;
  est.tail_count = static_cast<std::int64_t>(m);
  est.n = static_cast<std::int64_t>(n);
  return est;
}

}  // namespace

GradientEstimate gcvar_estimate(std::span<const ScoredSample> samples, double alpha) {
  return tail_lr_estimate(samples, alpha, /*use_baseline=*/true);
}

GradientEstimate naive_tail_lr_estimate(std::span<const ScoredSample> samples, double alpha) {
  return tail_lr_estimate(samples, alpha, /*use_baseline=*/false);
}

GradientEstimate plain_lr_estimate(std::span<const ScoredSample> samples) {
  const int k = common_param_dim(samples);
  const std::size_t n = samples.size();

  double mean = 0.0;
  for (const auto& s : samples) mean += s.reward;
  mean /= static_cast<double>(n);

  const double scale = 1.0 / static_cast<double>(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
  for (const auto& s : samples) grad += s.score * ((s.reward - mean) * scale);

  GradientEstimate est;
  est.grad = std::move(grad);
  est.var_used = mean;  // the baseline actually used
  est.tail_count = static_cast<std::int64_t>(n);
  est.n = static_cast<std::int64_t>(n);
  return est;
}

std::vector<BiasStudyRow> bias_study(const Model& model, const ParamVector& theta,
                                     double alpha, std::span<const std::int64_t> batch_sizes,
                                     int replications, const Eigen::VectorXd& true_grad,
                                     std::uint64_t seed, int n_threads) {
  if (replications < 1) throw std::invalid_argument("bias_study needs replications >= 1");
  if (true_grad.size() != model.param_dim()) {
    throw std::invalid_argument("true gradient has wrong dimension");
  }

  std::vector<BiasStudyRow> rows;
  rows.reserve(batch_sizes.size());
  std::uint64_t stream = 0;
  for (const std::int64_t n : batch_sizes) {
    Eigen::VectorXd mean_est = Eigen::VectorXd::Zero(model.param_dim());
    for (int rep = 0; rep < replications; ++rep) {
      const auto batch =
          draw_batch(model, theta, n, substream_seed(seed, stream++), n_threads);
      mean_est += gcvar_estimate(batch, alpha).grad;
    }
    mean_est /= static_cast<double>(replications);
    rows.push_back({n, (mean_est - true_grad).cwiseAbs().mean()});
  }
  return rows;
}

double loglog_slope(std::span<const BiasStudyRow> rows) {
  if (rows.size() < 2) throw std::invalid_argument("slope needs at least two rows");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& row : rows) {
    const double x = std::log(static_cast<double>(row.n));
    const double y = std::log(row.mean_abs_bias);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const auto n = static_cast<double>(rows.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace cvar
