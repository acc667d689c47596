#include <doctest.h>

#include <cmath>

#include "cvar/empirical_risk.hpp"
#include "cvar/environments.hpp"
#include "cvar/oracle.hpp"

using namespace cvar;

namespace {

// Single-state-plus-terminal MDP with one action and the given reward atoms.
EpisodicMdp one_shot_mdp(std::vector<RewardAtom> atoms) {
  EpisodicMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.terminal_state = 1;
  mdp.step_cap = 2;
  mdp.initial_dist = Eigen::VectorXd::Zero(2);
  mdp.initial_dist[0] = 1.0;
  Eigen::VectorXd to_terminal(2);
  to_terminal << 0.0, 1.0;
  Eigen::VectorXd stay(2);
  stay << 0.0, 1.0;
  mdp.transitions = {{to_terminal}, {stay}};
  mdp.reward_atoms = {{std::move(atoms)}, {{{0.0, 1.0}}}};
  return mdp;
}

SoftmaxPolicy single_action_policy(int n_states) {
  SoftmaxPolicy policy;
  policy.features.assign(static_cast<std::size_t>(n_states), Eigen::MatrixXd::Zero(1, 1));
  return policy;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("enumeration of degenerate systems") {
  const ParamVector theta = Eigen::VectorXd::Zero(1);

  auto det = enumerate_mdp(one_shot_mdp({{5.0, 1.0}}), single_action_policy(2), theta);
  REQUIRE(det.atoms.size() == 1);
  CHECK(det.atoms[0].value == 5.0);
  CHECK(det.atoms[0].prob == 1.0);

  auto coin = enumerate_mdp(one_shot_mdp({{0.0, 0.5}, {3.0, 0.5}}), single_action_policy(2), theta);
  REQUIRE(coin.atoms.size() == 2);
  CHECK(coin.atoms[0].value == 0.0);
  CHECK(coin.atoms[0].prob == doctest::Approx(0.5));
  CHECK(coin.atoms[1].value == 3.0);
  CHECK(coin.atoms[1].prob == doctest::Approx(0.5));
}

TEST_CASE("two-step chain conserves probability mass") {
  ChainMdpConfig config;
  config.n_steps = 2;
  const ChainEnv env = build_chain(config);
  ParamVector theta(2);
  theta << 0.3, -0.1;
  const ExactDistribution dist = enumerate_mdp(env.mdp, env.policy, theta);
  CHECK(std::abs(dist.total_mass() - 1.0) <= 1e-12);
  CHECK(dist.atoms.size() <= 9);
  for (std::size_t i = 1; i < dist.atoms.size(); ++i) {
    CHECK(dist.atoms[i - 1].value < dist.atoms[i].value);
  }
}

TEST_CASE("exact var and cvar on atom fixtures") {
  ExactDistribution coin;
  coin.atoms = {{0.0, 0.5, 1}, {3.0, 0.5, 1}};
  const VarCvar a = exact_var_cvar(coin, 0.5);
  CHECK(a.var == 0.0);
  CHECK(a.cvar == 0.0);

  ExactDistribution point;
  point.atoms = {{2.5, 1.0, 1}};
  for (double alpha : {0.05, 0.4, 0.95}) {
    const VarCvar p = exact_var_cvar(point, alpha);
    CHECK(p.var == 2.5);
    CHECK(p.cvar == doctest::Approx(2.5));
  }

  ExactDistribution skew;
  skew.atoms = {{0.0, 0.3, 1}, {1.0, 0.7, 1}};
  const VarCvar s = exact_var_cvar(skew, 0.5);
  CHECK(s.var == 1.0);
  CHECK(s.cvar == doctest::Approx(0.4));  // (0.3*0 + 0.2*1) / 0.5
}

TEST_CASE("monte-carlo sampling agrees with the enumerated law") {
  ChainMdpConfig config;  // one step, safe 1, risky {0, 3}
  const ChainEnv env = build_chain(config);
  const ParamVector theta = Eigen::VectorXd::Zero(2);
  const ExactDistribution dist = enumerate_mdp(env.mdp, env.policy, theta);

  MdpModel model(env.mdp, env.policy);
  const auto batch = draw_batch(model, theta, 1'000'000, 31415);
  std::vector<double> rewards;
  rewards.reserve(batch.size());
  for (const auto& s : batch) rewards.push_back(s.reward);

  // Lower tail is pure zeros with probability 0.25 >> alpha = 0.1.
  const VarCvar small = exact_var_cvar(dist, 0.1);
  CHECK(empirical_var(rewards, 0.1) == small.var);
  CHECK(empirical_cvar(rewards, 0.1) == small.cvar);

  const VarCvar mid = exact_var_cvar(dist, 0.5);
  CHECK(empirical_var(rewards, 0.5) == mid.var);
  CHECK(std::abs(empirical_cvar(rewards, 0.5) - mid.cvar) < 0.005);  // ~5 sigma
}

TEST_CASE("smoothed cvar converges to the atom convention as the noise shrinks") {
  // Asymmetric fixture: the quantile sits inside the upper atom's noise box,
  // so smoothing genuinely moves the value (by ~0.29 eta).
  double previous_err = 1e9;
  for (double eta : {0.1, 0.01, 0.001}) {
    ExactDistribution dist;
    dist.atoms = {{0.0, 0.3, 1}, {1.0, 0.7, 1}};
    dist.smoothing = eta;
    const double err = std::abs(exact_var_cvar(dist, 0.5).cvar - 0.4);
    CHECK(err <= eta);
    CHECK(err > 0.0);
    CHECK(err < previous_err);
    previous_err = err;
  }
}

TEST_CASE("smoothed closed form agrees with direct monte carlo") {
  ExactDistribution dist;
  dist.atoms = {{0.0, 0.25, 1}, {1.0, 0.5, 1}, {3.0, 0.25, 1}};
  dist.smoothing = 0.3;
  const VarCvar closed = exact_var_cvar(dist, 0.2);

  Rng rng = make_rng(2718);
  std::vector<double> draws(500'000);
  for (auto& v : draws) {
    const double u = draw_unit_uniform(rng);
    const double atom = (u < 0.25) ? 0.0 : (u < 0.75 ? 1.0 : 3.0);
    v = atom + draw_symmetric_uniform(rng, 0.3);
  }
  CHECK(std::abs(empirical_var(draws, 0.2) - closed.var) < 0.01);
  CHECK(std::abs(empirical_cvar(draws, 0.2) - closed.cvar) < 0.01);
}

TEST_CASE("smoothed oracle refuses multi-draw convolutions") {
  ExactDistribution dist;
  dist.atoms = {{0.0, 0.5, 2}, {3.0, 0.5, 2}};
  dist.smoothing = 0.1;
  CHECK_THROWS_AS(exact_var_cvar(dist, 0.5), std::invalid_argument);
}

TEST_CASE("finite differences show second-order convergence") {
  ChainMdpConfig config;
  config.smoothing = 0.05;
  const ChainEnv env = build_chain(config);
  ParamVector theta(2);
  theta << 0.3, -0.2;

  const auto g1 = fd_cvar_gradient(env.mdp, env.policy, theta, 0.1, 1e-3).grad;
  const auto g2 = fd_cvar_gradient(env.mdp, env.policy, theta, 0.1, 5e-4).grad;
  const auto g3 = fd_cvar_gradient(env.mdp, env.policy, theta, 0.1, 2.5e-4).grad;
  const double d12 = (g1 - g2).cwiseAbs().maxCoeff();
  const double d23 = (g2 - g3).cwiseAbs().maxCoeff();
  CHECK(d12 / d23 > 2.5);  // halving h shrinks the defect ~4x
  CHECK(d12 / d23 < 6.0);
}

TEST_CASE("constant-reward system has a zero gradient") {
  ChainMdpConfig config;
  config.safe_reward = 1.0;
  config.risky_low = 1.0;
  config.risky_high = 1.0;
  const ChainEnv env = build_chain(config);
  const auto fd = fd_cvar_gradient(env.mdp, env.policy, Eigen::VectorXd::Zero(2), 0.1);
  CHECK(fd.grad.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gaussian closed forms") {
  CHECK(gaussian_truth(0.0, 0.5).grad == 1.0);
  // No-baseline limit 1 - sqrt(2/pi) theta: harmless at 0, wildly off at -2,
  // sign-reversed at +2.
  CHECK(gaussian_truth(0.0, 0.5).naive_limit == 1.0);
  CHECK(gaussian_truth(-2.0, 0.5).naive_limit == doctest::Approx(2.5957691216).epsilon(1e-8));
  CHECK(gaussian_truth(2.0, 0.5).naive_limit == doctest::Approx(-0.5957691216).epsilon(1e-8));
  const double base = gaussian_truth(0.0, 0.3).cvar;
  CHECK(gaussian_truth(5.0, 0.3).cvar == doctest::Approx(5.0 + base).epsilon(1e-12));
  CHECK(gaussian_truth(0.0, 0.5).cvar == doctest::Approx(-std::sqrt(2.0 / M_PI)).epsilon(1e-10));
}

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {0.001, 0.05, 0.3, 0.5, 0.9, 0.999}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  }
  CHECK(std::abs(normal_quantile(0.5)) < 1e-12);
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
}

TEST_CASE("enumeration budget is enforced") {
  ChainMdpConfig config;
  config.n_steps = 3;  // 27 trajectories
  const ChainEnv env = build_chain(config);
  CHECK_THROWS_AS(enumerate_mdp(env.mdp, env.policy, Eigen::VectorXd::Zero(2), 10),
                  BudgetExceededError);
}

}  // TEST_SUITE
