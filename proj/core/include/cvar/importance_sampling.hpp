#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cvar/gcvar.hpp"
#include "cvar/model.hpp"

namespace cvar {

// Raised when the reweighted quantile does not exist on a batch, i.e. the
// normalized likelihood-ratio mass sum(lr)/N falls short of alpha.
struct QuantileUndefinedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A sample drawn from a proposal distribution g together with its density
// ratio against the nominal distribution f at the same point.
struct WeightedScoredSample {
  ScoredSample inner;
  double likelihood_ratio = 1.0;  // f(x,y;theta) / g(x,y;theta,omega)
};

// A family of sampling distributions g(.; theta, omega) over the same
// outcome space as a Model. The designated identity parameter makes g
// coincide with the nominal f, so likelihood ratios are exactly one there.
//
// log_ratio and omega_score re-evaluate densities for a previously drawn
// sample at an arbitrary omega; the sample's discrete/continuous outcome
// parts carry everything needed for that.
class Proposal {
 public:
  virtual ~Proposal() = default;

  virtual int param_dim() const = 0;  // theta dimension
  virtual int omega_dim() const = 0;

  // The omega at which g(.; theta, omega) coincides with the nominal f, so
  // every likelihood ratio is exactly one. May depend on theta.
  virtual Eigen::VectorXd omega_identity(const ParamVector& theta) const = 0;

  // Draws from g(.; theta, omega) and attaches the density ratio f/g.
  virtual WeightedScoredSample draw(const ParamVector& theta, const Eigen::VectorXd& omega,
                                    Rng& rng) const = 0;

  // log f(sample; theta) - log g(sample; theta, omega).
  virtual double log_ratio(const ScoredSample& sample, const ParamVector& theta,
                           const Eigen::VectorXd& omega) const = 0;

  // d/domega log g(sample; theta, omega).
  virtual Eigen::VectorXd omega_score(const ScoredSample& sample, const ParamVector& theta,
                                      const Eigen::VectorXd& omega) const = 0;
};

// Reweighted empirical alpha-quantile: sorts by reward (stable), accumulates
// normalized ratios L(i) = 1/N * sum_{j<=i} lr_j in sorted order and returns
// the reward at the first index where L reaches alpha. With all ratios equal
// to one this reduces bit-for-bit to empirical_var.
double is_empirical_var(std::span<const WeightedScoredSample> samples, double alpha);

// Reweighted CVaR gradient estimate:
//   grad_j = 1/(alpha N) * sum_i score_j(i) * lr_i * (r_i - var_is) * 1{tail}
// with var_is and the tail set from the reweighted quantile above. With unit
// ratios this reduces bit-for-bit to gcvar_estimate.
GradientEstimate is_gcvar_estimate(std::span<const WeightedScoredSample> samples, double alpha);

struct SaaFit {
  Eigen::VectorXd omega;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int accepted_steps = 0;
  bool saw_nonfinite = false;  // some trial proposal put ~zero mass on a tail sample
};

// Fits the proposal parameter by minimizing the sample-average variance
// surrogate
//   V(omega) = 1/N_saa * sum_i [ sum_j H_j(i)^2 ] * f(x_i)/g(x_i;omega)
// over n_saa samples drawn from the *nominal* distribution, where
// H_j = (1/alpha) score_j (r - var) 1{r <= var} uses the crude empirical
// quantile of the same sample set. Deterministic gradient descent from the
// identity parameter, with the identity d/domega (f/g) = -(f/g) d/domega
// log g, and backtracking (halving, at most 30 times) so accepted steps
// never increase the objective.
SaaFit fit_proposal_saa(const Model& model, const Proposal& proposal, const ParamVector& theta,
                        double alpha, std::int64_t n_saa, int gd_steps, double gd_rate,
                        std::uint64_t seed, int n_threads = 1);

// Evaluates the SAA objective above at a given omega (exposed for brute
// force scans in tests and for refit diagnostics).
double saa_objective(const Proposal& proposal, std::span<const ScoredSample> nominal_samples,
                     const ParamVector& theta, double alpha, const Eigen::VectorXd& omega);

struct VarianceComparison {
  Eigen::VectorXd var_crude;
  Eigen::VectorXd var_is;
};

// Componentwise empirical variance of the crude and reweighted gradient
// estimators over independent batches of size n.
VarianceComparison variance_comparison(const Model& model, const Proposal& proposal,
                                       const ParamVector& theta, double alpha,
                                       const Eigen::VectorXd& omega, std::int64_t n,
                                       int replications, std::uint64_t seed,
                                       int n_threads = 1);

// Mean-shift proposal for the Gaussian location family: g = Normal(omega, 1)
// while the nominal stays Normal(theta, 1). Identity is omega = theta.
class GaussianMeanShiftProposal final : public Proposal {
 public:
  int param_dim() const override { return 1; }
  int omega_dim() const override { return 1; }
  Eigen::VectorXd omega_identity(const ParamVector& theta) const override { return theta; }

  WeightedScoredSample draw(const ParamVector& theta, const Eigen::VectorXd& omega,
                            Rng& rng) const override;
  double log_ratio(const ScoredSample& sample, const ParamVector& theta,
                   const Eigen::VectorXd& omega) const override;
  Eigen::VectorXd omega_score(const ScoredSample& sample, const ParamVector& theta,
                              const Eigen::VectorXd& omega) const override;
};

// Draws n proposal samples, sample i on substream i of `seed`.
std::vector<WeightedScoredSample> draw_is_batch(const Proposal& proposal,
                                                const ParamVector& theta,
                                                const Eigen::VectorXd& omega, std::int64_t n,
                                                std::uint64_t seed, int n_threads = 1);

}  // namespace cvar
