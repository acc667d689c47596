#include "cvar/model.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace cvar {

ScoredSample GaussianMeanModel::draw(const ParamVector& theta, Rng& rng) const {
  validate_param_vector(*this, theta);
  const double z = theta[0] + draw_unit_normal(rng);
  ScoredSample s;
  s.x = Eigen::VectorXd::Constant(1, z);
  s.reward = z;
  s.score = Eigen::VectorXd::Constant(1, z - theta[0]);
  return s;
}

CategoricalSoftmaxModel::CategoricalSoftmaxModel(Eigen::MatrixXd features,
                                                 Eigen::VectorXd rewards,
                                                 double smoothing)
    : features_(std::move(features)), rewards_(std::move(rewards)), smoothing_(smoothing) {
  if (features_.rows() < 2) {
    throw std::invalid_argument("categorical model needs at least 2 categories");
  }
  if (rewards_.size() != features_.rows()) {
    throw std::invalid_argument("reward count must match category count");
  }
  if (!features_.allFinite() || !rewards_.allFinite()) {
    throw std::invalid_argument("categorical model rejects non-finite features/rewards");
  }
  if (smoothing_ < 0.0) {
    throw std::invalid_argument("smoothing half-width must be >= 0");
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - shift).exp();
  p /= p.sum();
  return p;
}

Eigen::VectorXd CategoricalSoftmaxModel::category_probs(const ParamVector& theta) const {
  validate_param_vector(*this, theta);
  return softmax(features_ * theta);
}

double CategoricalSoftmaxModel::log_prob(int category, const ParamVector& theta) const {
  const Eigen::VectorXd logits = features_ * theta;
  const double shift = logits.maxCoeff();
  const double log_z = std::log((logits.array() - shift).exp().sum()) + shift;
  return logits[category] - log_z;
}

ScoredSample CategoricalSoftmaxModel::draw(const ParamVector& theta, Rng& rng) const {
  const Eigen::VectorXd p = category_probs(theta);
  const int j = draw_categorical(p, static_cast<int>(p.size()), rng);

  ScoredSample s;
  s.outcome = {static_cast<std::int32_t>(j)};
  s.reward = rewards_[j];
  if (smoothing_ > 0.0) {
    const double noise = draw_symmetric_uniform(rng, smoothing_);
    s.reward += noise;
    s.x = Eigen::VectorXd::Constant(1, noise);
  }
  s.score = features_.row(j).transpose() - features_.transpose() * p;
  return s;
}

void validate_param_vector(const Model& model, const ParamVector& theta) {
  if (theta.size() != model.param_dim()) {
    throw std::invalid_argument("parameter vector has wrong dimension");
  }
  if (!theta.allFinite()) {
    throw std::invalid_argument("parameter vector has non-finite entries");
  }
}

std::vector<ScoredSample> draw_batch(const Model& model, const ParamVector& theta,
                                     std::int64_t n, std::uint64_t seed, int n_threads) {
  if (n < 0) throw std::invalid_argument("batch size must be >= 0");
  validate_param_vector(model, theta);

  std::vector<ScoredSample> out(static_cast<std::size_t>(n));
  const std::int64_t n_chunks = (n + kSubstreamChunk - 1) / kSubstreamChunk;
  auto fill_chunks = [&](std::int64_t first, std::int64_t last) {
    for (std::int64_t c = first; c < last; ++c) {
      Rng rng = make_rng(substream_seed(seed, static_cast<std::uint64_t>(c)));
      const std::int64_t hi = std::min(n, (c + 1) * kSubstreamChunk);
      for (std::int64_t i = c * kSubstreamChunk; i < hi; ++i) {
        out[static_cast<std::size_t>(i)] = model.draw(theta, rng);
      }
    }
  };

  if (n_threads <= 1 || n_chunks < 2) {
    fill_chunks(0, n_chunks);
    return out;
  }

  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_threads));
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

Eigen::VectorXd score_identity_check(const Model& model, const ParamVector& theta,
                                     std::int64_t n, std::uint64_t seed, int n_threads) {
  if (n < 1) throw std::invalid_argument("score_identity_check needs n >= 1");
  const auto batch = draw_batch(model, theta, n, seed, n_threads);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(model.param_dim());
  for (const auto& s : batch) mean += s.score;
  mean /= static_cast<double>(n);
  return mean;
}

}  // namespace cvar
