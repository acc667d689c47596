#include "cvar/importance_sampling.hpp"

#include <cmath>
#include <thread>

#include "cvar/empirical_risk.hpp"

namespace cvar {
namespace {

struct SortedCut {
  double var = 0.0;
  std::size_t last_sorted_pos = 0;  // tail is sorted positions [0, last]
  std::vector<std::size_t> order;
};

void validate_weighted_batch(std::span<const WeightedScoredSample> samples) {
  if (samples.empty()) throw std::invalid_argument("estimator rejects an empty batch");
  const auto k = samples.front().inner.score.size();
  for (const auto& s : samples) {
    if (s.inner.score.size() != k) {
      throw std::invalid_argument("inconsistent score lengths in batch");
    }
    if (!std::isfinite(s.likelihood_ratio) || s.likelihood_ratio < 0.0) {
      throw std::invalid_argument("likelihood ratios must be finite and >= 0");
    }
    if (!std::isfinite(s.inner.reward) || !s.inner.score.allFinite()) {
      throw std::invalid_argument("batch has non-finite rewards or scores");
    }
  }
}

// Walks the reward-sorted batch accumulating likelihood-ratio mass until it
// reaches alpha*N. Uses the same guarded threshold as tail_count, so with
// unit ratios the selected element is exactly the ceil(alpha*N)-th smallest.
SortedCut reweighted_quantile_cut(std::span<const WeightedScoredSample> samples, double alpha) {
  validate_weighted_batch(samples);
  validate_alpha(alpha);
  const std::size_t n = samples.size();

  std::vector<double> rewards;
  rewards.reserve(n);
  for (const auto& s : samples) rewards.push_back(s.inner.reward);

  SortedCut cut;
  cut.order = ascending_order(rewards);
  const double threshold = quantile_mass_threshold(alpha, n);
  double running = 0.0;
  for (std::size_t pos = 0; pos < n; ++pos) {
    running += samples[cut.order[pos]].likelihood_ratio;
    if (running >= threshold) {
      cut.var = rewards[cut.order[pos]];
      cut.last_sorted_pos = pos;
      return cut;
    }
  }
  throw QuantileUndefinedError(
      "reweighted quantile undefined: likelihood-ratio mass below alpha");
}

}  // namespace

double is_empirical_var(std::span<const WeightedScoredSample> samples, double alpha) {
  return reweighted_quantile_cut(samples, alpha).var;
}

GradientEstimate is_gcvar_estimate(std::span<const WeightedScoredSample> samples, double alpha) {
  const auto cut = reweighted_quantile_cut(samples, alpha);
  const std::size_t n = samples.size();
  const auto k = samples.front().inner.score.size();

  std::vector<char> in_tail(n, 0);
  for (std::size_t pos = 0; pos <= cut.last_sorted_pos; ++pos) in_tail[cut.order[pos]] = 1;

  const double scale = 1.0 / (alpha * static_cast<double>(n));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_tail[i]) continue;
    const auto& s = samples[i];
    grad += s.inner.score * ((s.likelihood_ratio * (s.inner.reward - cut.var)) * scale);
  }

  GradientEstimate est;
  est.grad = std::move(grad);
  est.var_used = cut.var;
  est.tail_count = static_cast<std::int64_t>(cut.last_sorted_pos + 1);
  est.n = static_cast<std::int64_t>(n);
  return est;
}

namespace {

// Per-sample squared magnitude of H over components; nonzero only in the
// crude tail of the nominal sample set.
std::vector<double> saa_h_squared(std::span<const ScoredSample> samples, double alpha) {
  const std::size_t n = samples.size();
  std::vector<double> rewards;
  rewards.reserve(n);
  for (const auto& s : samples) rewards.push_back(s.reward);

  const std::size_t m = tail_count(alpha, n);
  const auto order = ascending_order(rewards);
  const double var = rewards[order[m - 1]];

  std::vector<double> h2(n, 0.0);
  for (std::size_t pos = 0; pos < m; ++pos) {
    const std::size_t i = order[pos];
    const double coef = (rewards[i] - var) / alpha;
    h2[i] = coef * coef * samples[i].score.squaredNorm();
  }
  return h2;
}

double saa_value(const Proposal& proposal, std::span<const ScoredSample> samples,
                 std::span<const double> h2, const ParamVector& theta,
                 const Eigen::VectorXd& omega) {
  double value = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (h2[i] == 0.0) continue;
    value += h2[i] * std::exp(proposal.log_ratio(samples[i], theta, omega));
  }
  return value / static_cast<double>(samples.size());
}

}  // namespace

double saa_objective(const Proposal& proposal, std::span<const ScoredSample> nominal_samples,
                     const ParamVector& theta, double alpha, const Eigen::VectorXd& omega) {
  const auto h2 = saa_h_squared(nominal_samples, alpha);
  return saa_value(proposal, nominal_samples, h2, theta, omega);
}

SaaFit fit_proposal_saa(const Model& model, const Proposal& proposal, const ParamVector& theta,
                        double alpha, std::int64_t n_saa, int gd_steps, double gd_rate,
                        std::uint64_t seed, int n_threads) {
  if (n_saa < 1) throw std::invalid_argument("fit_proposal_saa needs n_saa >= 1");
  if (gd_steps < 0 || gd_rate <= 0.0) {
    throw std::invalid_argument("fit_proposal_saa needs gd_steps >= 0 and gd_rate > 0");
  }

  const auto samples = draw_batch(model, theta, n_saa, seed, n_threads);
  const auto h2 = saa_h_squared(samples, alpha);
  const auto scale = 1.0 / static_cast<double>(n_saa);

  SaaFit fit;
  fit.omega = proposal.omega_identity(theta);
  fit.initial_objective = saa_value(proposal, samples, h2, theta, fit.omega);
  fit.final_objective = fit.initial_objective;
  if (!std::isfinite(fit.initial_objective)) {
    // The proposal family cannot even cover the tail at its identity; there
    // is no finite iterate to descend from.
    fit.saw_nonfinite = true;
    return fit;
  }

  for (int step = 0; step < gd_steps; ++step) {
    // d/domega V = -1/N sum_i h2_i * (f/g)_i * d/domega log g_i
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(proposal.omega_dim());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (h2[i] == 0.0) continue;
      const double w = std::exp(proposal.log_ratio(samples[i], theta, fit.omega));
      grad -= proposal.omega_score(samples[i], theta, fit.omega) * (h2[i] * w * scale);
    }

    bool accepted = false;
    double rate = gd_rate;
    for (int halving = 0; halving <= 30; ++halving) {
      const Eigen::VectorXd trial = fit.omega - rate * grad;
      const double trial_value = saa_value(proposal, samples, h2, theta, trial);
      if (!std::isfinite(trial_value)) {
        fit.saw_nonfinite = true;
        rate *= 0.5;
        continue;
      }
      if (trial_value <= fit.final_objective) {
        fit.omega = trial;
        fit.final_objective = trial_value;
        fit.accepted_steps += 1;
        accepted = true;
        break;
      }
      rate *= 0.5;
    }
    if (!accepted) break;  // stuck: stop at the last finite iterate
  }
  return fit;
}

VarianceComparison variance_comparison(const Model& model, const Proposal& proposal,
                                       const ParamVector& theta, double alpha,
                                       const Eigen::VectorXd& omega, std::int64_t n,
                                       int replications, std::uint64_t seed, int n_threads) {
  if (replications < 2) throw std::invalid_argument("variance_comparison needs replications >= 2");
  const int k = model.param_dim();

  std::vector<Eigen::VectorXd> crude, weighted;
  crude.reserve(replications);
  weighted.reserve(replications);
  for (int rep = 0; rep < replications; ++rep) {
    const auto batch =
        draw_batch(model, theta, n, substream_seed(seed, 2 * rep), n_threads);
    crude.push_back(gcvar_estimate(batch, alpha).grad);
    const auto is_batch =
        draw_is_batch(proposal, theta, omega, n, substream_seed(seed, 2 * rep + 1), n_threads);
    weighted.push_back(is_gcvar_estimate(is_batch, alpha).grad);
  }

  auto component_variance = [&](const std::vector<Eigen::VectorXd>& grads) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
    for (const auto& g : grads) mean += g;
    mean /= static_cast<double>(grads.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(k);
    for (const auto& g : grads) var += (g - mean).cwiseAbs2();
    return Eigen::VectorXd(var / static_cast<double>(grads.size() - 1));
  };

  return {component_variance(crude), component_variance(weighted)};
}

WeightedScoredSample GaussianMeanShiftProposal::draw(const ParamVector& theta,
                                                     const Eigen::VectorXd& omega,
                                                     Rng& rng) const {
  if (theta.size() != 1 || omega.size() != 1) {
    throw std::invalid_argument("gaussian mean-shift proposal is one-dimensional");
  }
  const double z = omega[0] + draw_unit_normal(rng);
  WeightedScoredSample s;
  s.inner.x = Eigen::VectorXd::Constant(1, z);
  s.inner.reward = z;
  s.inner.score = Eigen::VectorXd::Constant(1, z - theta[0]);
  if (omega[0] == theta[0]) {
    s.likelihood_ratio = 1.0;  // identity proposal, exact by construction
  } else {
    s.likelihood_ratio = std::exp(log_ratio(s.inner, theta, omega));
  }
  return s;
}

double GaussianMeanShiftProposal::log_ratio(const ScoredSample& sample, const ParamVector& theta,
                                            const Eigen::VectorXd& omega) const {
  const double z = sample.x[0];
  const double dt = z - theta[0];
  const double dw = z - omega[0];
  return 0.5 * (dw * dw - dt * dt);
}

Eigen::VectorXd GaussianMeanShiftProposal::omega_score(const ScoredSample& sample,
                                                       const ParamVector&,
                                                       const Eigen::VectorXd& omega) const {
  return Eigen::VectorXd::Constant(1, sample.x[0] - omega[0]);
}

std::vector<WeightedScoredSample> draw_is_batch(const Proposal& proposal,
                                                const ParamVector& theta,
                                                const Eigen::VectorXd& omega, std::int64_t n,
                                                std::uint64_t seed, int n_threads) {
  if (n < 0) throw std::invalid_argument("batch size must be >= 0");
  std::vector<WeightedScoredSample> out(static_cast<std::size_t>(n));
  const std::int64_t n_chunks = (n + kSubstreamChunk - 1) / kSubstreamChunk;
  auto fill_chunks = [&](std::int64_t first, std::int64_t last) {
    for (std::int64_t c = first; c < last; ++c) {
      Rng rng = make_rng(substream_seed(seed, static_cast<std::uint64_t>(c)));
      const std::int64_t hi = std::min(n, (c + 1) * kSubstreamChunk);
      for (std::int64_t i = c * kSubstreamChunk; i < hi; ++i) {
        out[static_cast<std::size_t>(i)] = proposal.draw(theta, omega, rng);
      }
    }
  };

  if (n_threads <= 1 || n_chunks < 2) {
    fill_chunks(0, n_chunks);
    return out;
  }
  std::vector<std::thread> workers;
  const std::int64_t per_worker = (n_chunks + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    const std::int64_t first = t * per_worker;
    const std::int64_t last = std::min(n_chunks, first + per_worker);
    if (first >= last) break;
    workers.emplace_back(fill_chunks, first, last);
  }
  for (auto& w : workers) w.join();
  return out;
}

}  // namespace cvar
