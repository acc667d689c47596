#include "cvar/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "cvar/empirical_risk.hpp"

namespace cvar {

ProjectionBox ProjectionBox::symmetric(int dim, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("box radius must be positive");
  return {Eigen::VectorXd::Constant(dim, -radius), Eigen::VectorXd::Constant(dim, radius)};
}

void ProjectionBox::validate(int dim) const {
  if (lower.size() != dim || upper.size() != dim) {
    throw std::invalid_argument("projection box has wrong dimension");
  }
  if (((upper - lower).array() <= 0.0).any()) {
    throw std::invalid_argument("projection box needs lower < upper componentwise");
  }
}

ParamVector project(const ProjectionBox& box, const ParamVector& theta) {
  if (theta.size() != box.lower.size()) {
    throw std::invalid_argument("projection dimension mismatch");
  }
  return theta.cwiseMax(box.lower).cwiseMin(box.upper);
}

double StepSchedule::at(std::int64_t iteration) const {
  if (iteration < 1) throw std::invalid_argument("schedules are indexed from 1");
  switch (kind) {
    case Kind::Harmonic:
      return eps0 / static_cast<double>(iteration);
    case Kind::Constant:
      return eps0;
  }
  return eps0;
}

std::int64_t BatchSchedule::at(std::int64_t iteration) const {
  if (iteration < 1) throw std::invalid_argument("schedules are indexed from 1");
  switch (kind) {
    case Kind::PolyLog: {
      const double l = std::log(static_cast<double>(iteration + 1));
      const auto grown = static_cast<std::int64_t>(std::ceil(l * l * l * l));
      return std::max(n_min, grown);
    }
    case Kind::Fixed:
      return fixed_n;
  }
  return fixed_n;
}

Schedules Schedules::defaults(double alpha, double eps0) {
  validate_alpha(alpha);
  Schedules s;
  s.step = {StepSchedule::Kind::Harmonic, eps0};
  s.batch.kind = BatchSchedule::Kind::PolyLog;
  s.batch.n_min = static_cast<std::int64_t>(std::ceil(4.0 / alpha));
  return s;
}

namespace {

struct BatchStats {
  double mean = 0.0;
  double cvar = 0.0;
};

BatchStats crude_batch_stats(const std::vector<ScoredSample>& batch, double alpha) {
  std::vector<double> rewards;
  rewards.reserve(batch.size());
  for (const auto& s : batch) rewards.push_back(s.reward);
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  return {mean, empirical_cvar(rewards, alpha)};
}

// Reweighted estimates of the nominal batch mean and CVaR from proposal
// samples: mean = 1/N sum lr*r, cvar = 1/(alpha N) sum lr*r over the
// reweighted tail.
BatchStats weighted_batch_stats(const std::vector<WeightedScoredSample>& batch, double alpha) {
  const double n = static_cast<double>(batch.size());
  double mean = 0.0;
  for (const auto& s : batch) mean += s.likelihood_ratio * s.inner.reward;
  mean /= n;

  std::vector<double> rewards;
  rewards.reserve(batch.size());
  for (const auto& s : batch) rewards.push_back(s.inner.reward);
  const auto order = ascending_order(rewards);
  const double threshold = quantile_mass_threshold(alpha, batch.size());
  double running = 0.0;
  double tail_sum = 0.0;
  for (std::size_t pos = 0; pos < batch.size(); ++pos) {
    const auto& s = batch[order[pos]];
    running += s.likelihood_ratio;
    tail_sum += s.likelihood_ratio * s.inner.reward;
    if (running >= threshold) break;
  }
  return {mean, tail_sum / (alpha * n)};
}

}  // namespace

RunTrace cvar_sgd(const Model& model, const Proposal* proposal, const ParamVector& theta0,
                  const CvarSgdOptions& options) {
  const int k = model.param_dim();
  options.box.validate(k);
  validate_alpha(options.alpha);
  if (options.iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  const bool use_is = options.estimator == EstimatorKind::ImportanceSampling;
  if (use_is && proposal == nullptr) {
    throw std::invalid_argument("importance-sampling estimator needs a proposal");
  }
  if (use_is && options.refit_period < 1) {
    throw std::invalid_argument("refit period must be >= 1");
  }

  RunTrace trace;
  ParamVector theta = project(options.box, theta0);
  Eigen::VectorXd omega;
  if (use_is) omega = proposal->omega_identity(theta);

  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t i = 1; i <= options.iterations; ++i) {
    const double eps = options.schedules.step.at(i);
    const std::int64_t n = options.schedules.batch.at(i);
    const std::uint64_t batch_seed = substream_seed(options.seed, 2 * static_cast<std::uint64_t>(i));
    const std::uint64_t refit_seed =
        substream_seed(options.seed, 2 * static_cast<std::uint64_t>(i) + 1);

    GradientEstimate estimate;
    BatchStats stats;
    try {
      if (use_is) {
        if ((i - 1) % options.refit_period == 0) {
          omega = fit_proposal_saa(model, *proposal, theta, options.alpha, options.saa.n,
                                   options.saa.gd_steps, options.saa.gd_rate, refit_seed,
                                   options.n_threads)
                      .omega;
        }
        const auto batch =
            draw_is_batch(*proposal, theta, omega, n, batch_seed, options.n_threads);
        estimate = is_gcvar_estimate(batch, options.alpha);
        stats = weighted_batch_stats(batch, options.alpha);
      } else {
        const auto batch = draw_batch(model, theta, n, batch_seed, options.n_threads);
        estimate = options.estimator == EstimatorKind::Crude
                       ? gcvar_estimate(batch, options.alpha)
                       : plain_lr_estimate(batch);
        stats = crude_batch_stats(batch, options.alpha);
      }
    } catch (const QuantileUndefinedError& err) {
      trace.aborted = true;
      trace.failed_iteration = i;
      trace.failure = err.what();
      break;
    }

    theta = project(options.box, theta + eps * estimate.grad);

    IterationRecord rec;
    rec.iteration = i;
    rec.theta = theta;
    rec.step_size = eps;
    rec.batch_size = n;
    rec.var_used = estimate.var_used;
    rec.tail_count = estimate.tail_count;
    rec.mean_return = stats.mean;
    rec.cvar_return = stats.cvar;
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.records.push_back(std::move(rec));
    if (options.on_iteration) options.on_iteration(trace.records.back());
  }

  trace.final_theta = theta;
  return trace;
}

PolicyEvaluation evaluate_policy(const Model& model, const ParamVector& theta, double alpha,
                                 std::int64_t n_eval, std::uint64_t seed, int n_bins,
                                 int n_threads) {
  validate_alpha(alpha);
  const auto min_eval = static_cast<std::int64_t>(std::ceil(1.0 / alpha));
  if (n_eval < min_eval) {
    throw std::invalid_argument("evaluate_policy needs n_eval >= ceil(1/alpha)");
  }
  if (n_bins < 1) throw std::invalid_argument("histogram needs at least one bin");

  const auto batch = draw_batch(model, theta, n_eval, seed, n_threads);
  std::vector<double> rewards;
  rewards.reserve(batch.size());
  for (const auto& s : batch) rewards.push_back(s.reward);

  PolicyEvaluation eval;
  double sum = 0.0;
  for (double r : rewards) sum += r;
  eval.mean = sum / static_cast<double>(rewards.size());
  eval.cvar = empirical_cvar(rewards, alpha);

  double lo = rewards.front(), hi = rewards.front();
  for (double r : rewards) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (hi == lo) hi = lo + 1.0;  // degenerate constant batch

  eval.histogram.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int b = 0; b <= n_bins; ++b) {
    eval.histogram.edges[static_cast<std::size_t>(b)] =
        lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(n_bins);
  }
  eval.histogram.counts.assign(static_cast<std::size_t>(n_bins), 0);
  for (double r : rewards) {
    auto bin = static_cast<std::int64_t>((r - lo) / (hi - lo) * n_bins);
    bin = std::min<std::int64_t>(std::max<std::int64_t>(bin, 0), n_bins - 1);
    eval.histogram.counts[static_cast<std::size_t>(bin)] += 1;
  }
  return eval;
}

}  // namespace cvar
