#include <doctest.h>

#include <vector>

#include "cvar/empirical_risk.hpp"
#include "cvar/oracle.hpp"
#include "cvar/rng.hpp"

using namespace cvar;

namespace {

std::vector<double> normal_draws(std::int64_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = draw_unit_normal(rng);
  return out;
}

}  // namespace

TEST_SUITE("empirical_risk") {

TEST_CASE("cdf counts the fraction at or below z") {
  const std::vector<double> r{1, 2, 3};
  CHECK(empirical_cdf(r, 2.0) == doctest::Approx(2.0 / 3.0));
  const std::vector<double> single{5};
  CHECK(empirical_cdf(single, 0.0) == 0.0);
  const std::vector<double> ties{1, 1, 1, 1};
  CHECK(empirical_cdf(ties, 1.0) == 1.0);
}

TEST_CASE("var selects the ceil(alpha N) order statistic") {
  const std::vector<double> r{5, 1, 3, 2, 4};
  CHECK(empirical_var(r, 0.4) == 2.0);
  const std::vector<double> single{7};
  CHECK(empirical_var(single, 0.5) == 7.0);
  CHECK_THROWS_AS(empirical_var(r, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(empirical_var(r, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(empirical_var(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST_CASE("tail count survives one-ulp overshoot of alpha*n") {
  CHECK(tail_count(0.07, 100) == 7);  // 0.07*100 rounds to 7.0000000000000009
  CHECK(tail_count(0.4, 5) == 2);
  CHECK(tail_count(0.5, 2) == 1);
  CHECK(tail_count(0.001, 10) == 1);  // clamped to at least one sample
  CHECK(tail_count(0.999, 3) == 3);
}

TEST_CASE("gaussian quantile at scale matches the inverse-CDF oracle") {
  const auto r = normal_draws(1'000'000, 20240501);
  CHECK(std::abs(empirical_var(r, 0.05) - normal_quantile(0.05)) < 0.01);
  CHECK(std::abs(normal_quantile(0.05) - (-1.6448536269514722)) < 1e-9);
}

TEST_CASE("cvar averages the selected tail") {
  const std::vector<double> r{1, 2, 3, 4, 5};
  CHECK(empirical_cvar(r, 0.4) == doctest::Approx(1.5));
  const std::vector<double> constant(13, 2.5);
  for (double a : {0.1, 0.5, 0.9}) CHECK(empirical_cvar(constant, a) == 2.5);

  const auto z = normal_draws(1'000'000, 77);
  const double analytic = gaussian_truth(0.0, 0.5).cvar;  // -sqrt(2/pi)
  CHECK(analytic == doctest::Approx(-0.7978845608).epsilon(1e-6));
  CHECK(std::abs(empirical_cvar(z, 0.5) - analytic) < 0.01);
}

TEST_CASE("monotonicity, order bound and translation equivariance") {
  Rng rng = make_rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(draw_unit_uniform(rng) * 40);
    std::vector<double> r(static_cast<std::size_t>(n));
    for (auto& v : r) v = 10.0 * (draw_unit_uniform(rng) - 0.3);

    double prev_cdf = 0.0;
    for (double z = -5.0; z <= 8.0; z += 0.5) {
      const double f = empirical_cdf(r, z);
      CHECK(f >= prev_cdf);
      prev_cdf = f;
    }

    double prev_var = -1e300;
    double max_r = *std::max_element(r.begin(), r.end());
    for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const double v = empirical_var(r, a);
      const double c = empirical_cvar(r, a);
      CHECK(v >= prev_var);
      CHECK(c <= v);
      CHECK(v <= max_r);
      prev_var = v;
    }

    const double shift = 11.75;
    std::vector<double> shifted = r;
    for (auto& v : shifted) v += shift;
    CHECK(empirical_var(shifted, 0.3) == empirical_var(r, 0.3) + shift);
    CHECK(empirical_cvar(shifted, 0.3) ==
          doctest::Approx(empirical_cvar(r, 0.3) + shift).epsilon(1e-12));
  }
}

TEST_CASE("ties at the threshold resolve deterministically") {
  // Five samples, four of them tied at the quantile value.
  const std::vector<double> r{1, 1, 1, 1, 2};
  CHECK(tail_count(0.4, 5) == 2);
  CHECK(empirical_var(r, 0.4) == 1.0);
  CHECK(empirical_cvar(r, 0.4) == 1.0);
}

TEST_CASE("estimates converge toward the analytic gaussian values") {
  const double truth_var = normal_quantile(0.1);
  const double truth_cvar = gaussian_truth(0.0, 0.1).cvar;
  double err_small = 0.0, err_large = 0.0;
  {
    const auto r = normal_draws(2'000, 5);
    err_small = std::abs(empirical_var(r, 0.1) - truth_var) +
                std::abs(empirical_cvar(r, 0.1) - truth_cvar);
  }
  {
    const auto r = normal_draws(200'000, 5);
    err_large = std::abs(empirical_var(r, 0.1) - truth_var) +
                std::abs(empirical_cvar(r, 0.1) - truth_cvar);
  }
  CHECK(err_large < err_small);
  CHECK(err_large < 0.02);
}

}  // TEST_SUITE
