#pragma once

#include <cstdint>
#include <random>

namespace cvar {

// All randomness flows through explicitly seeded generators passed by the
// caller; there is no global random state anywhere in the library.
using Rng = std::mt19937_64;

// SplitMix64 finalizer; turns structured seeds into well-mixed ones.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the index-th substream of a master seed. Giving each sample of a
// batch its own substream makes results independent of thread count and
// evaluation order.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ mix64(index));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double draw_unit_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_unit_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Uniform on [-half_width, half_width]; used for reward smoothing noise.
inline double draw_symmetric_uniform(Rng& rng, double half_width) {
  return std::uniform_real_distribution<double>(-half_width, half_width)(rng);
}

// Draws an index with the given (normalized) probabilities. The final
// category absorbs any floating point slack in the cumulative sum.
template <typename Probs>
int draw_categorical(const Probs& probs, int n, Rng& rng) {
  const double u = draw_unit_uniform(rng);
  double cum = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return n - 1;
}

}  // namespace cvar
