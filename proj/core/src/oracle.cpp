#include "cvar/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "cvar/empirical_risk.hpp"

namespace cvar {

double ExactDistribution::total_mass() const {
  double mass = 0.0;
  for (const auto& atom : atoms) mass += atom.prob;
  return mass;
}

namespace {

constexpr double kMassGuard = 1e-12;

struct Enumerator {
  const EpisodicMdp& mdp;
  const SoftmaxPolicy& policy;
  const ParamVector& theta;
  std::int64_t budget;
  std::int64_t paths = 0;
  // Key (reward value, noise-draw count); exact-valued rewards merge.
  std::map<std::pair<double, int>, double> atoms;

  void walk(int state, std::int64_t steps, double prob, double reward_sum) {
    if (state == mdp.terminal_state || steps == mdp.step_cap) {
      if (++paths > budget) throw BudgetExceededError("trajectory enumeration budget exceeded");
      atoms[{reward_sum, static_cast<int>(steps)}] += prob;
      return;
    }
    const Eigen::VectorXd action_probs = policy.action_probs(state, theta);
    for (int a = 0; a < action_probs.size(); ++a) {
      if (action_probs[a] <= 0.0) continue;
      for (const auto& atom : mdp.reward_atoms[state][a]) {
        if (atom.prob <= 0.0) continue;
        const Eigen::VectorXd& row = mdp.transitions[state][a];
        for (int next = 0; next < row.size(); ++next) {
          if (row[next] <= 0.0) continue;
          walk(next, steps + 1, prob * action_probs[a] * atom.prob * row[next],
               reward_sum + atom.value);
        }
      }
    }
  }
};

}  // namespace

ExactDistribution enumerate_mdp(const EpisodicMdp& mdp, const SoftmaxPolicy& policy,
                                const ParamVector& theta, std::int64_t budget) {
  mdp.validate();
  if (mdp.step_cap > 10'000) {
    // Recursion depth is bounded by the step cap, independent of the leaf
    // budget (a single self-looping path can be arbitrarily deep).
    throw BudgetExceededError("enumeration requires a step cap of at most 10000");
  }
  Enumerator e{mdp, policy, theta, budget, 0, {}};
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.initial_dist[s] > 0.0) e.walk(s, 0, mdp.initial_dist[s], 0.0);
  }

  ExactDistribution dist;
  dist.smoothing = mdp.smoothing;
  dist.atoms.reserve(e.atoms.size());
  for (const auto& [key, prob] : e.atoms) dist.atoms.push_back({key.first, prob, key.second});
  std::sort(dist.atoms.begin(), dist.atoms.end(),
            [](const ExactAtom& a, const ExactAtom& b) { return a.value < b.value; });
  return dist;
}

namespace {

VarCvar atom_var_cvar(const ExactDistribution& dist, double alpha) {
  VarCvar out;
  out.var = dist.atoms.back().value;  // fallback when alpha ~ total mass
  out.segment = static_cast<int>(dist.atoms.size()) - 1;
  double cum = 0.0;
  for (std::size_t i = 0; i < dist.atoms.size(); ++i) {
    cum += dist.atoms[i].prob;
    if (cum >= alpha * (1.0 - kMassGuard)) {
      out.var = dist.atoms[i].value;
      out.segment = static_cast<int>(i);
      break;
    }
  }

  // Fractionally weight the boundary atom so exactly alpha mass is averaged.
  double taken = 0.0;
  double sum = 0.0;
  for (const auto& atom : dist.atoms) {
    const double w = std::min(atom.prob, alpha - taken);
    if (w <= 0.0) break;
    sum += w * atom.value;
    taken += w;
    if (taken >= alpha * (1.0 - kMassGuard)) break;
  }
  out.cvar = sum / alpha;
  return out;
}

// CDF of the mixture of uniform boxes [v_i - eta, v_i + eta].
double smoothed_cdf(const ExactDistribution& dist, double eta, double z) {
  double f = 0.0;
  for (const auto& atom : dist.atoms) {
    const double t = (z - (atom.value - eta)) / (2.0 * eta);
    f += atom.prob * std::clamp(t, 0.0, 1.0);
  }
  return f;
}

VarCvar smoothed_var_cvar(const ExactDistribution& dist, double alpha) {
  const double eta = dist.smoothing;
  for (const auto& atom : dist.atoms) {
    if (atom.noise_draws != 1) {
      throw std::invalid_argument(
          "smoothed exact CVaR supports exactly one noise draw per outcome; "
          "use an unsmoothed distribution or a single-step system");
    }
  }

  std::vector<double> breaks;
  breaks.reserve(2 * dist.atoms.size());
  for (const auto& atom : dist.atoms) {
    breaks.push_back(atom.value - eta);
    breaks.push_back(atom.value + eta);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  // The CDF is continuous piecewise linear between breakpoints; locate the
  // crossing segment and interpolate.
  VarCvar out;
  out.var = breaks.back();  // fallback when alpha ~ total mass
  out.segment = static_cast<int>(breaks.size()) - 1;
  double prev_b = breaks.front();
  double prev_f = 0.0;
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    const double b = breaks[i];
    const double f = smoothed_cdf(dist, eta, b);
    if (f >= alpha * (1.0 - kMassGuard)) {
      const double slope = (f - prev_f) / (b - prev_b);
      out.var = prev_b + (alpha - prev_f) / slope;
      out.var = std::clamp(out.var, prev_b, b);
      out.segment = static_cast<int>(i);
      break;
    }
    prev_b = b;
    prev_f = f;
  }

  // E[Z 1{Z <= var}] in closed form per uniform box.
  double tail = 0.0;
  for (const auto& atom : dist.atoms) {
    const double lo = atom.value - eta;
    const double hi = std::min(out.var, atom.value + eta);
    if (hi <= lo) continue;
    tail += atom.prob * (hi * hi - lo * lo) / (4.0 * eta);
  }
  out.cvar = tail / alpha;
  return out;
}

}  // namespace

VarCvar exact_var_cvar(const ExactDistribution& dist, double alpha) {
  validate_alpha(alpha);
  if (dist.atoms.empty()) throw std::invalid_argument("distribution has no atoms");
  if (std::abs(dist.total_mass() - 1.0) > 1e-9) {
    throw std::invalid_argument("distribution mass must be 1");
  }
  return dist.smoothing > 0.0 ? smoothed_var_cvar(dist, alpha) : atom_var_cvar(dist, alpha);
}

FdCvarGradient fd_cvar_gradient(const EpisodicMdp& mdp, const SoftmaxPolicy& policy,
                                const ParamVector& theta, double alpha, double h,
                                std::int64_t budget) {
  if (h <= 0.0) throw std::invalid_argument("finite-difference step must be positive");
  const int k = policy.param_dim();

  FdCvarGradient out;
  out.grad = Eigen::VectorXd::Zero(k);
  out.kink_warnings.assign(static_cast<std::size_t>(k), 0);
  for (int j = 0; j < k; ++j) {
    ParamVector plus = theta;
    ParamVector minus = theta;
    plus[j] += h;
    minus[j] -= h;
    const VarCvar up = exact_var_cvar(enumerate_mdp(mdp, policy, plus, budget), alpha);
    const VarCvar down = exact_var_cvar(enumerate_mdp(mdp, policy, minus, budget), alpha);
    out.grad[j] = (up.cvar - down.cvar) / (2.0 * h);
    out.kink_warnings[static_cast<std::size_t>(j)] = (up.segment != down.segment) ? 1 : 0;
  }
  return out;
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile level must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

GaussianTruth gaussian_truth(double theta, double alpha) {
  validate_alpha(alpha);
  GaussianTruth truth;
  truth.cvar = theta - normal_pdf(normal_quantile(alpha)) / alpha;
  truth.grad = 1.0;
  // E[(Z-theta) Z | Z <= theta] at alpha = 1/2: the U^2 part contributes 1,
  // the theta*U part contributes theta * E[U | U <= 0] = -sqrt(2/pi) theta.
  truth.naive_limit = 1.0 - std::sqrt(2.0 / std::numbers::pi) * theta;
  return truth;
}

}  // namespace cvar
