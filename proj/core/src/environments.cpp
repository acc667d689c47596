#include "cvar/environments.hpp"

#include <stdexcept>

#include "cvar/oracle.hpp"

namespace cvar {

std::int64_t chain_trajectory_count(const ChainMdpConfig& config) {
  // Per step: safe (1 atom) + risky (2 atoms, but only 1 if degenerate).
  const std::int64_t branches = (config.risky_low == config.risky_high) ? 2 : 3;
  std::int64_t count = 1;
  for (int i = 0; i < config.n_steps; ++i) {
    if (count > 1'000'000'000 / branches) return 1'000'000'001;  // saturate
    count *= branches;
  }
  return count;
}

ChainEnv build_chain(const ChainMdpConfig& config, std::int64_t budget) {
  if (config.n_steps < 1) throw std::invalid_argument("chain needs n_steps >= 1");
  if (!(config.risky_low_prob >= 0.0 && config.risky_low_prob <= 1.0)) {
    throw std::invalid_argument("risky_low_prob must be a probability");
  }
  if (chain_trajectory_count(config) > budget) {
    throw BudgetExceededError("chain configuration exceeds the enumerability budget");
  }

  const int n_states = config.n_steps + 1;  // chain positions plus terminal
  const int terminal = config.n_steps;
  constexpr int kSafe = 0;
  constexpr int kRisky = 1;

  EpisodicMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = 2;
  mdp.terminal_state = terminal;
  mdp.smoothing = config.smoothing;
  mdp.step_cap = config.n_steps + 1;
  mdp.initial_dist = Eigen::VectorXd::Zero(n_states);
  mdp.initial_dist[0] = 1.0;

  mdp.transitions.assign(n_states, std::vector<Eigen::VectorXd>(2));
  mdp.reward_atoms.assign(n_states, std::vector<std::vector<RewardAtom>>(2));
  for (int s = 0; s < n_states; ++s) {
    Eigen::VectorXd advance = Eigen::VectorXd::Zero(n_states);
    advance[(s == terminal) ? terminal : s + 1] = 1.0;
    for (int a = 0; a < 2; ++a) mdp.transitions[s][a] = advance;

    mdp.reward_atoms[s][kSafe] = {{config.safe_reward, 1.0}};
    if (config.risky_low == config.risky_high) {
      mdp.reward_atoms[s][kRisky] = {{config.risky_low, 1.0}};
    } else {
      mdp.reward_atoms[s][kRisky] = {{config.risky_low, config.risky_low_prob},
                                     {config.risky_high, 1.0 - config.risky_low_prob}};
    }
  }
  mdp.validate();

  SoftmaxPolicy policy;
  Eigen::MatrixXd phi(2, 2);
  phi << 1.0, 0.0,  // safe
      0.0, 1.0;     // risky
  policy.features.assign(n_states, phi);

  return {std::move(mdp), std::move(policy)};
}

}  // namespace cvar
