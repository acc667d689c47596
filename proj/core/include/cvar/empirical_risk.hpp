#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cvar {

// Empirical distribution utilities over a batch of rewards. The quantile
// convention is the ceil(alpha*N)-th smallest sample; ties at the threshold
// are resolved by sorted-stable order so that discrete fixtures behave
// deterministically.

// Fraction of rewards <= z.
double empirical_cdf(std::span<const double> rewards, double z);

// The ceil(alpha*N)-th smallest reward.
double empirical_var(std::span<const double> rewards, double alpha);

// Mean of the ceil(alpha*N) smallest rewards (divisor is the count actually
// selected, which matches the sorted-list quantile and differs from alpha*N
// by O(1/N)).
double empirical_cvar(std::span<const double> rewards, double alpha);

// --- shared plumbing for the quantile/tail conventions -------------------

// alpha*n with a one-sided relative guard. The raw product can land one ulp
// above an exact integer (e.g. 0.07*100 = 7.0000000000000009) which would
// push ceil() one sample too far; the guard snaps such products back.
double quantile_mass_threshold(double alpha, std::size_t n);

// Number of samples in the alpha-tail: ceil(alpha*n), clamped to [1, n].
std::size_t tail_count(double alpha, std::size_t n);

// Indices of `rewards` in ascending order; stable, so equal rewards keep
// their original relative order (the tie rule).
std::vector<std::size_t> ascending_order(std::span<const double> rewards);

void validate_reward_batch(std::span<const double> rewards);
void validate_alpha(double alpha);

}  // namespace cvar
