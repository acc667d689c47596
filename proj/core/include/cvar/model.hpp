#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "cvar/rng.hpp"

namespace cvar {

// Controllable parameter vector of a stochastic model or policy.
using ParamVector = Eigen::VectorXd;

// One realization of a parameterized stochastic model: a discrete outcome
// part, a continuous outcome part, the scalar reward, and the score
// (gradient of the log density with respect to the model parameters,
// evaluated at this sample).
struct ScoredSample {
  std::vector<std::int32_t> outcome;
  Eigen::VectorXd x;
  double reward = 0.0;
  Eigen::VectorXd score;
};

// A parameterized stochastic model that can be sampled together with its
// score. Implementations must be immutable after construction and safe to
// share across threads; each concurrent sampler owns its own Rng.
class Model {
 public:
  virtual ~Model() = default;

  // Dimension k of the parameter vector.
  virtual int param_dim() const = 0;

  // Draws one sample and its score at the given parameter.
  virtual ScoredSample draw(const ParamVector& theta, Rng& rng) const = 0;

  // Optional bound b on |reward|; estimators never require it.
  virtual std::optional<double> reward_bound() const { return std::nullopt; }
};

// Scalar Gaussian location family: reward Z ~ Normal(theta, 1) with score
// d/dtheta log f = Z - theta. The analytic workhorse for estimator tests.
class GaussianMeanModel final : public Model {
 public:
  GaussianMeanModel() = default;

  int param_dim() const override { return 1; }
  ScoredSample draw(const ParamVector& theta, Rng& rng) const override;
};

// Finite outcome family with softmax probabilities
//   p_j = exp(phi_j . theta) / sum_a exp(phi_a . theta)
// over rows phi_j of a feature matrix; score of a draw is phi_j - E[phi].
// Rewards are fixed per category, optionally blurred by uniform noise on
// [-smoothing, smoothing].
class CategoricalSoftmaxModel final : public Model {
 public:
  CategoricalSoftmaxModel(Eigen::MatrixXd features, Eigen::VectorXd rewards,
                          double smoothing = 0.0);

  int param_dim() const override { return static_cast<int>(features_.cols()); }
  ScoredSample draw(const ParamVector& theta, Rng& rng) const override;
  std::optional<double> reward_bound() const override {
    return rewards_.cwiseAbs().maxCoeff() + smoothing_;
  }

  Eigen::VectorXd category_probs(const ParamVector& theta) const;
  double log_prob(int category, const ParamVector& theta) const;

 private:
  Eigen::MatrixXd features_;  // m x k, one row per category
  Eigen::VectorXd rewards_;   // m
  double smoothing_ = 0.0;
};

// Numerically stable softmax of a vector of logits.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Samples per generator substream when drawing batches; chunks amortize the
// generator seeding cost while keeping batches independent of thread count.
inline constexpr std::int64_t kSubstreamChunk = 1024;

// Draws n samples; samples [c*kSubstreamChunk, (c+1)*kSubstreamChunk) come
// sequentially from substream c of `seed`. Results do not depend on
// n_threads; the reduction order of any downstream estimator is the index
// order of the returned vector.
std::vector<ScoredSample> draw_batch(const Model& model, const ParamVector& theta,
                                     std::int64_t n, std::uint64_t seed,
                                     int n_threads = 1);

// Monte-Carlo mean of the score over n i.i.d. draws. The score-function
// identity E[d/dtheta log f] = 0 makes this a standard sanity check: the
// result should be within a few 1/sqrt(n) of zero componentwise.
Eigen::VectorXd score_identity_check(const Model& model, const ParamVector& theta,
                                     std::int64_t n, std::uint64_t seed,
                                     int n_threads = 1);

void validate_param_vector(const Model& model, const ParamVector& theta);

}  // namespace cvar
