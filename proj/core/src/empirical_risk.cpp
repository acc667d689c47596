#include "cvar/empirical_risk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cvar {

void validate_reward_batch(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("reward batch must be non-empty");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("reward batch has non-finite entries");
  }
}

void validate_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in the open interval (0, 1)");
  }
}

double quantile_mass_threshold(double alpha, std::size_t n) {
  return alpha * static_cast<double>(n) * (1.0 - 1e-12);
}

std::size_t tail_count(double alpha, std::size_t n) {
  validate_alpha(alpha);
  if (n == 0) throw std::invalid_argument("tail_count needs n >= 1");
  const auto m = static_cast<std::size_t>(std::ceil(quantile_mass_threshold(alpha, n)));
  return std::clamp<std::size_t>(m, 1, n);
}

std::vector<std::size_t> ascending_order(std::span<const double> rewards) {
  std::vector<std::size_t> order(rewards.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rewards[a] < rewards[b]; });
  return order;
}

double empirical_cdf(std::span<const double> rewards, double z) {
  validate_reward_batch(rewards);
  std::size_t count = 0;
  for (double r : rewards) count += (r <= z) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(rewards.size());
}

double empirical_var(std::span<const double> rewards, double alpha) {
  validate_reward_batch(rewards);
  const std::size_t m = tail_count(alpha, rewards.size());
  std::vector<double> sorted(rewards.begin(), rewards.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[m - 1];
}

double empirical_cvar(std::span<const double> rewards, double alpha) {
  validate_reward_batch(rewards);
  const std::size_t m = tail_count(alpha, rewards.size());
  std::vector<double> sorted(rewards.begin(), rewards.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += sorted[i];
  return sum / static_cast<double>(m);
}

}  // namespace cvar
