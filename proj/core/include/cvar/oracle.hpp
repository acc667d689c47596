#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cvar/mdp.hpp"

namespace cvar {

struct BudgetExceededError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExactAtom {
  double value = 0.0;
  double prob = 0.0;
  int noise_draws = 0;  // number of smoothing-noise terms convolved into this atom
};

// Exact law of the total reward of an enumerable system: probability atoms,
// optionally convolved with the per-step uniform smoothing noise. Atoms are
// kept sorted by value.
struct ExactDistribution {
  std::vector<ExactAtom> atoms;
  double smoothing = 0.0;

  double total_mass() const;
};

// Exhaustive depth-first enumeration of every (action, reward-atom,
// transition) branch of the MDP under the softmax policy, accumulating path
// probability and total reward. Throws BudgetExceededError when the number
// of paths exceeds the budget.
ExactDistribution enumerate_mdp(const EpisodicMdp& mdp, const SoftmaxPolicy& policy,
                                const ParamVector& theta,
                                std::int64_t budget = 1'000'000);

struct VarCvar {
  double var = 0.0;
  double cvar = 0.0;
  // Identity of the CDF piece the quantile landed on (atom index, or
  // breakpoint segment for a smoothed distribution); finite differences use
  // it to detect crossings of nonsmooth points.
  int segment = -1;
};

// Exact VaR and CVaR of the distribution at level alpha.
//
// Without smoothing the quantile is inf{z : F(z) >= alpha} over the discrete
// CDF, and the tail expectation weights the boundary atom fractionally so
// that exactly alpha mass is averaged (the limit of the continuous
// definition under vanishing smoothing, and continuous in any parameter the
// atom probabilities depend on).
//
// With smoothing > 0 each atom is a uniform box of half-width `smoothing`
// (supported only for single-noise-draw atoms); the CDF is then piecewise
// linear and both quantities have closed forms.
VarCvar exact_var_cvar(const ExactDistribution& dist, double alpha);

struct FdCvarGradient {
  Eigen::VectorXd grad;
  // Per component: the quantile moved across an atom / CDF-segment boundary
  // between theta-h and theta+h, so the central difference straddles a
  // nonsmooth point.
  std::vector<char> kink_warnings;
};

// Central finite differences of the exact CVaR through the enumeration
// oracle, componentwise in theta. This is the independent ground truth the
// sampling estimators are checked against.
FdCvarGradient fd_cvar_gradient(const EpisodicMdp& mdp, const SoftmaxPolicy& policy,
                                const ParamVector& theta, double alpha, double h = 1e-4,
                                std::int64_t budget = 1'000'000);

struct GaussianTruth {
  double cvar = 0.0;
  double grad = 1.0;         // d/dtheta CVaR of Normal(theta, 1): constant one
  double naive_limit = 0.0;  // limit of the no-baseline tail estimator at alpha = 1/2
};

// Closed forms for the Gaussian location family: lower-tail CVaR
// theta - pdf(q_alpha)/alpha, its constant unit gradient, and the
// 1 - sqrt(2/pi) * theta limit of the no-baseline ablation (unbounded in
// theta, and pointing the wrong way once theta exceeds sqrt(pi/2)).
GaussianTruth gaussian_truth(double theta, double alpha);

double normal_pdf(double z);
double normal_cdf(double z);

// Inverse standard normal CDF by bisection on erfc; accurate to ~1e-13,
// intended for oracle comparisons rather than hot loops.
double normal_quantile(double p);

}  // namespace cvar
