#pragma once

#include <cstdint>

#include "cvar/mdp.hpp"

namespace cvar {

// A small enumerable decision chain built for oracle validation. Every state
// offers a "safe" action (deterministic reward) and a "risky" action (a low
// reward with probability risky_low_prob, else a high one); the risky action
// has the better mean but the heavier lower tail, so the CVaR-optimal and
// mean-optimal policies differ. Features are shared across states:
// phi(s, safe) = (1, 0), phi(s, risky) = (0, 1).
struct ChainMdpConfig {
  int n_steps = 1;
  double safe_reward = 1.0;
  double risky_low = 0.0;
  double risky_high = 3.0;
  double risky_low_prob = 0.5;
  double smoothing = 0.0;
};

struct ChainEnv {
  EpisodicMdp mdp;
  SoftmaxPolicy policy;
};

// Number of distinct (action, reward-atom) trajectories of the chain;
// transitions are deterministic so this is the enumeration leaf count.
std::int64_t chain_trajectory_count(const ChainMdpConfig& config);

// Throws BudgetExceededError when the trajectory count exceeds the budget.
ChainEnv build_chain(const ChainMdpConfig& config, std::int64_t budget = 1'000'000);

}  // namespace cvar
