#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "cvar/importance_sampling.hpp"
#include "cvar/model.hpp"

namespace cvar {

struct RewardAtom {
  double value = 0.0;
  double prob = 1.0;
};

// Finite episodic decision process with a designated absorbing terminal
// state, per-(state, action) discrete reward distributions (optionally
// blurred by uniform noise on [-smoothing, smoothing]) and a hard step cap
// that doubles as the non-termination guard.
struct EpisodicMdp {
  int n_states = 0;
  int n_actions = 0;
  int terminal_state = 0;
  std::vector<std::vector<Eigen::VectorXd>> transitions;         // [s][a] -> row over states
  std::vector<std::vector<std::vector<RewardAtom>>> reward_atoms;  // [s][a]
  Eigen::VectorXd initial_dist;
  double smoothing = 0.0;
  std::int64_t step_cap = 1;

  // Checks row stochasticity (1 +- 1e-12), the absorbing terminal state and
  // the initial distribution; throws std::invalid_argument on violation.
  void validate() const;
};

// Markov softmax policy: action probabilities at state s are proportional to
// exp(phi(s,a) . theta) over the feature rows phi(s,a). The policy object
// holds only the feature map; theta is passed per call so one policy can be
// evaluated across an optimization trajectory.
struct SoftmaxPolicy {
  std::vector<Eigen::MatrixXd> features;  // [s]: n_actions x k

  int param_dim() const;
  int n_actions(int state) const { return static_cast<int>(features[state].rows()); }
  Eigen::VectorXd action_probs(int state, const ParamVector& theta) const;
  double log_action_prob(int state, int action, const ParamVector& theta) const;
};

struct Trajectory {
  std::vector<int> states;      // s_0 ... s_tau
  std::vector<int> actions;     // a_0 ... a_{tau-1}
  std::vector<double> rewards;  // rho_0 ... rho_{tau-1}
  double total_reward = 0.0;
  Eigen::VectorXd score;  // d/dtheta log-likelihood of the action sequence
  double log_lr = 0.0;    // log(nominal/tilted path probability); 0 under nominal
};

// Value-tilted sampling kernel: transition probabilities are reweighted by
// exp(-omega * values[s']) and renormalized per row, steering rollouts
// toward low-value successors for importance sampling.
struct ValueTilt {
  double omega = 0.0;
  Eigen::VectorXd values;  // one entry per state
};

// One tilted row f(s'|s,a) exp(-omega values[s']) / Z(s,a); omega = 0
// returns the nominal row unchanged.
Eigen::VectorXd tilted_transition_row(const EpisodicMdp& mdp, const Eigen::VectorXd& values,
                                      double omega, int state, int action);

// Rolls out one episode. Per step the draw order is fixed: action, reward
// atom, smoothing noise (if any), successor state. Under a tilt with
// omega != 0 the per-step log ratio log f - log f_tilted accumulates into
// log_lr; everything else (policy, rewards) is shared with the nominal
// kernel and cancels from the ratio.
Trajectory simulate(const EpisodicMdp& mdp, const SoftmaxPolicy& policy,
                    const ParamVector& theta, Rng& rng, const ValueTilt* tilt = nullptr);

// Sum over steps of phi(s_t, a_t) - E_{a ~ pi(.|s_t)}[phi(s_t, a)]. The
// reward part of the trajectory density does not depend on theta and
// contributes nothing.
Eigen::VectorXd trajectory_score(const SoftmaxPolicy& policy, const ParamVector& theta,
                                 const Trajectory& trajectory);

// max_a phi(s,a) . theta -- the cheap state-value surrogate used by the
// tilted kernel.
double softmax_value_heuristic(const SoftmaxPolicy& policy, const ParamVector& theta, int state);

// softmax_value_heuristic evaluated at every state.
Eigen::VectorXd state_value_heuristic(const SoftmaxPolicy& policy, const ParamVector& theta,
                                      int n_states);

// Flattens a trajectory into the estimator sample type: the discrete outcome
// is the interleaved state/action path, the continuous part the per-step
// rewards, the reward the total return.
ScoredSample to_scored_sample(const Trajectory& trajectory);

// Exposes an MDP plus policy as a sampleable model: reward = total return,
// score = trajectory score.
class MdpModel final : public Model {
 public:
  MdpModel(EpisodicMdp mdp, SoftmaxPolicy policy);

  int param_dim() const override { return policy_.param_dim(); }
  ScoredSample draw(const ParamVector& theta, Rng& rng) const override;

  const EpisodicMdp& mdp() const { return mdp_; }
  const SoftmaxPolicy& policy() const { return policy_; }

 private:
  EpisodicMdp mdp_;
  SoftmaxPolicy policy_;
};

// Value-tilted proposal over trajectories; omega is the scalar tilt
// strength, with identity omega = 0. Path probabilities are re-evaluated
// from the stored state/action path, so the SAA fit can move omega after
// the fact.
class MdpTiltProposal final : public Proposal {
 public:
  MdpTiltProposal(EpisodicMdp mdp, SoftmaxPolicy policy);

  int param_dim() const override { return policy_.param_dim(); }
  int omega_dim() const override { return 1; }
  Eigen::VectorXd omega_identity(const ParamVector&) const override { return Eigen::VectorXd::Zero(1); }

  WeightedScoredSample draw(const ParamVector& theta, const Eigen::VectorXd& omega,
                            Rng& rng) const override;
  double log_ratio(const ScoredSample& sample, const ParamVector& theta,
                   const Eigen::VectorXd& omega) const override;
  Eigen::VectorXd omega_score(const ScoredSample& sample, const ParamVector& theta,
                              const Eigen::VectorXd& omega) const override;

 private:
  EpisodicMdp mdp_;
  SoftmaxPolicy policy_;
};

}  // namespace cvar
