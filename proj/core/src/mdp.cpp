#include "cvar/mdp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cvar {

void EpisodicMdp::validate() const {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("mdp needs states and actions");
  if (terminal_state < 0 || terminal_state >= n_states) {
    throw std::invalid_argument("terminal state out of range");
  }
  if (step_cap < 1) throw std::invalid_argument("step cap must be >= 1");
  if (smoothing < 0.0) throw std::invalid_argument("smoothing half-width must be >= 0");

  if (initial_dist.size() != n_states || std::abs(initial_dist.sum() - 1.0) > 1e-12 ||
      initial_dist.minCoeff() < 0.0) {
    throw std::invalid_argument("initial distribution must be a probability vector");
  }
  if (static_cast<int>(transitions.size()) != n_states ||
      static_cast<int>(reward_atoms.size()) != n_states) {
    throw std::invalid_argument("transition/reward tables must cover every state");
  }
  for (int s = 0; s < n_states; ++s) {
    if (static_cast<int>(transitions[s].size()) != n_actions ||
        static_cast<int>(reward_atoms[s].size()) != n_actions) {
      throw std::invalid_argument("transition/reward tables must cover every action");
    }
    for (int a = 0; a < n_actions; ++a) {
      const auto& row = transitions[s][a];
      if (row.size() != n_states || row.minCoeff() < 0.0 ||
          std::abs(row.sum() - 1.0) > 1e-12) {
        throw std::invalid_argument("transition rows must sum to 1 within 1e-12");
      }
      if (s == terminal_state && row[terminal_state] != 1.0) {
        throw std::invalid_argument("terminal state must be absorbing");
      }
      double atom_mass = 0.0;
      for (const auto& atom : reward_atoms[s][a]) {
        if (atom.prob < 0.0 || !std::isfinite(atom.value)) {
          throw std::invalid_argument("reward atoms must be finite with prob >= 0");
        }
        atom_mass += atom.prob;
      }
      if (reward_atoms[s][a].empty() || std::abs(atom_mass - 1.0) > 1e-12) {
        throw std::invalid_argument("reward atom probabilities must sum to 1");
      }
    }
  }
}

int SoftmaxPolicy::param_dim() const {
  if (features.empty()) throw std::invalid_argument("policy has no feature map");
  return static_cast<int>(features.front().cols());
}

Eigen::VectorXd SoftmaxPolicy::action_probs(int state, const ParamVector& theta) const {
  return softmax(features[state] * theta);
}

double SoftmaxPolicy::log_action_prob(int state, int action, const ParamVector& theta) const {
  const Eigen::VectorXd logits = features[state] * theta;
  const double shift = logits.maxCoeff();
  const double log_z = std::log((logits.array() - shift).exp().sum()) + shift;
  return logits[action] - log_z;
}

Eigen::VectorXd tilted_transition_row(const EpisodicMdp& mdp, const Eigen::VectorXd& values,
                                      double omega, int state, int action) {
  const Eigen::VectorXd& row = mdp.transitions[state][action];
  if (omega == 0.0) return row;

  // Shift exponents by their max over the support to avoid overflow.
  double shift = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < row.size(); ++i) {
    if (row[i] > 0.0) shift = std::max(shift, -omega * values[i]);
  }
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(row.size());
  for (int i = 0; i < row.size(); ++i) {
    if (row[i] > 0.0) weighted[i] = row[i] * std::exp(-omega * values[i] - shift);
  }
  return weighted / weighted.sum();
}

Trajectory simulate(const EpisodicMdp& mdp, const SoftmaxPolicy& policy,
                    const ParamVector& theta, Rng& rng, const ValueTilt* tilt) {
  const bool tilted = tilt != nullptr && tilt->omega != 0.0;

  Trajectory traj;
  int s = draw_categorical(mdp.initial_dist, mdp.n_states, rng);
  traj.states.push_back(s);

  std::int64_t steps = 0;
  while (s != mdp.terminal_state && steps < mdp.step_cap) {
    const Eigen::VectorXd probs = policy.action_probs(s, theta);
    const int a = draw_categorical(probs, static_cast<int>(probs.size()), rng);

    const auto& atoms = mdp.reward_atoms[s][a];
    double rho;
    if (atoms.size() == 1) {
      rho = atoms.front().value;
    } else {
      double u = draw_unit_uniform(rng);
      std::size_t idx = 0;
      for (; idx + 1 < atoms.size(); ++idx) {
        u -= atoms[idx].prob;
        if (u < 0.0) break;
      }
      rho = atoms[idx].value;
    }
    if (mdp.smoothing > 0.0) rho += draw_symmetric_uniform(rng, mdp.smoothing);

    int next;
    if (tilted) {
      const Eigen::VectorXd tilted_row =
          tilted_transition_row(mdp, tilt->values, tilt->omega, s, a);
      next = draw_categorical(tilted_row, mdp.n_states, rng);
      traj.log_lr += std::log(mdp.transitions[s][a][next]) - std::log(tilted_row[next]);
    } else {
      next = draw_categorical(mdp.transitions[s][a], mdp.n_states, rng);
    }

    traj.actions.push_back(a);
    traj.rewards.push_back(rho);
    traj.states.push_back(next);
    s = next;
    ++steps;
  }

  for (double r : traj.rewards) traj.total_reward += r;
  traj.score = trajectory_score(policy, theta, traj);
  return traj;
}

Eigen::VectorXd trajectory_score(const SoftmaxPolicy& policy, const ParamVector& theta,
                                 const Trajectory& trajectory) {
  Eigen::VectorXd score = Eigen::VectorXd::Zero(policy.param_dim());
  for (std::size_t t = 0; t < trajectory.actions.size(); ++t) {
    const int s = trajectory.states[t];
    const int a = trajectory.actions[t];
    const Eigen::VectorXd probs = policy.action_probs(s, theta);
    score += policy.features[s].row(a).transpose() - policy.features[s].transpose() * probs;
  }
  return score;
}

double softmax_value_heuristic(const SoftmaxPolicy& policy, const ParamVector& theta,
                               int state) {
  return (policy.features[state] * theta).maxCoeff();
}

Eigen::VectorXd state_value_heuristic(const SoftmaxPolicy& policy, const ParamVector& theta,
                                      int n_states) {
  Eigen::VectorXd values(n_states);
  for (int s = 0; s < n_states; ++s) values[s] = softmax_value_heuristic(policy, theta, s);
  return values;
}

ScoredSample to_scored_sample(const Trajectory& trajectory) {
  ScoredSample sample;
  sample.outcome.reserve(trajectory.states.size() + trajectory.actions.size());
  for (std::size_t t = 0; t < trajectory.actions.size(); ++t) {
    sample.outcome.push_back(trajectory.states[t]);
    sample.outcome.push_back(trajectory.actions[t]);
  }
  sample.outcome.push_back(trajectory.states.back());
  sample.x = Eigen::Map<const Eigen::VectorXd>(trajectory.rewards.data(),
                                               static_cast<Eigen::Index>(trajectory.rewards.size()));
  sample.reward = trajectory.total_reward;
  sample.score = trajectory.score;
  return sample;
}

MdpModel::MdpModel(EpisodicMdp mdp, SoftmaxPolicy policy)
    : mdp_(std::move(mdp)), policy_(std::move(policy)) {
  mdp_.validate();
  if (static_cast<int>(policy_.features.size()) != mdp_.n_states) {
    throw std::invalid_argument("policy feature map must cover every state");
  }
}

ScoredSample MdpModel::draw(const ParamVector& theta, Rng& rng) const {
  return to_scored_sample(simulate(mdp_, policy_, theta, rng));
}

MdpTiltProposal::MdpTiltProposal(EpisodicMdp mdp, SoftmaxPolicy policy)
    : mdp_(std::move(mdp)), policy_(std::move(policy)) {
  mdp_.validate();
}

WeightedScoredSample MdpTiltProposal::draw(const ParamVector& theta,
                                           const Eigen::VectorXd& omega, Rng& rng) const {
  if (omega.size() != 1) throw std::invalid_argument("tilt strength omega is scalar");
  WeightedScoredSample out;
  if (omega[0] == 0.0) {
    out.inner = to_scored_sample(simulate(mdp_, policy_, theta, rng));
    out.likelihood_ratio = 1.0;
    return out;
  }
  ValueTilt tilt{omega[0], state_value_heuristic(policy_, theta, mdp_.n_states)};
  const Trajectory traj = simulate(mdp_, policy_, theta, rng, &tilt);
  out.inner = to_scored_sample(traj);
  out.likelihood_ratio = std::exp(traj.log_lr);
  return out;
}

double MdpTiltProposal::log_ratio(const ScoredSample& sample, const ParamVector& theta,
                                  const Eigen::VectorXd& omega) const {
  if (omega[0] == 0.0) return 0.0;
  const Eigen::VectorXd values = state_value_heuristic(policy_, theta, mdp_.n_states);
  double log_lr = 0.0;
  const std::size_t n_steps = sample.outcome.size() / 2;
  for (std::size_t t = 0; t < n_steps; ++t) {
    const int s = sample.outcome[2 * t];
    const int a = sample.outcome[2 * t + 1];
    const int next = sample.outcome[2 * t + 2];
    const Eigen::VectorXd tilted = tilted_transition_row(mdp_, values, omega[0], s, a);
    log_lr += std::log(mdp_.transitions[s][a][next]) - std::log(tilted[next]);
  }
  return log_lr;
}

Eigen::VectorXd MdpTiltProposal::omega_score(const ScoredSample& sample,
                                             const ParamVector& theta,
                                             const Eigen::VectorXd& omega) const {
  // d/domega log g = sum_t ( -V(s_{t+1}) + E_{tilted row}[V] )
  const Eigen::VectorXd values = state_value_heuristic(policy_, theta, mdp_.n_states);
  double grad = 0.0;
  const std::size_t n_steps = sample.outcome.size() / 2;
  for (std::size_t t = 0; t < n_steps; ++t) {
    const int s = sample.outcome[2 * t];
    const int a = sample.outcome[2 * t + 1];
    const int next = sample.outcome[2 * t + 2];
    const Eigen::VectorXd tilted = tilted_transition_row(mdp_, values, omega[0], s, a);
    grad += -values[next] + tilted.dot(values);
  }
  return Eigen::VectorXd::Constant(1, grad);
}

}  // namespace cvar
