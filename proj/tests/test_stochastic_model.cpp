#include <doctest.h>

#include <cmath>

#include "cvar/model.hpp"

using namespace cvar;

TEST_SUITE("stochastic_model") {

TEST_CASE("gaussian score is the location residual") {
  GaussianMeanModel model;
  Rng rng = make_rng(1);
  for (double t : {0.0, 2.0, -1.5}) {
    const ParamVector theta = Eigen::VectorXd::Constant(1, t);
    for (int i = 0; i < 100; ++i) {
      const ScoredSample s = model.draw(theta, rng);
      CHECK(s.score[0] == s.reward - t);  // exact identity of the family
    }
  }
}

TEST_CASE("gaussian score mean vanishes at monte-carlo scale") {
  GaussianMeanModel model;
  const ParamVector theta = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd mean = score_identity_check(model, theta, 1'000'000, 42);
  CHECK(std::abs(mean[0]) < 3e-3);

  const ParamVector theta1 = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd mean1 = score_identity_check(model, theta1, 1'000'000, 43);
  CHECK(std::abs(mean1[0]) < 4e-3);  // 4/sqrt(n)
}

TEST_CASE("single-draw identity check is just the drawn score") {
  GaussianMeanModel model;
  const ParamVector theta = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd one = score_identity_check(model, theta, 1, 7);
  Rng rng = make_rng(substream_seed(7, 0));
  CHECK(one[0] == model.draw(theta, rng).score[0]);
}

TEST_CASE("zero parameter gives a uniform softmax") {
  Eigen::MatrixXd phi(2, 1);
  phi << 1.0, 0.0;
  Eigen::VectorXd rewards(2);
  rewards << 1.0, 0.0;
  CategoricalSoftmaxModel model(phi, rewards);

  const ParamVector theta = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd p = model.category_probs(theta);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  Rng rng = make_rng(3);
  int count0 = 0;
  const int n = 100'000;
  for (int i = 0; i < n; ++i) count0 += (model.draw(theta, rng).outcome[0] == 0) ? 1 : 0;
  CHECK(std::abs(count0 / static_cast<double>(n) - 0.5) < 5e-3);
}

TEST_CASE("categorical score follows the softmax formula") {
  Eigen::MatrixXd phi(2, 1);
  phi << 1.0, 0.0;
  Eigen::VectorXd rewards(2);
  rewards << 1.0, 0.0;
  CategoricalSoftmaxModel model(phi, rewards);

  const ParamVector theta = Eigen::VectorXd::Zero(1);
  Rng rng = make_rng(11);
  for (int i = 0; i < 50; ++i) {
    const ScoredSample s = model.draw(theta, rng);
    if (s.outcome[0] == 0) {
      CHECK(s.score[0] == doctest::Approx(0.5));  // 1 - 0.5
    } else {
      CHECK(s.score[0] == doctest::Approx(-0.5));
    }
  }
}

TEST_CASE("categorical score matches finite differences of the log-probability") {
  Eigen::MatrixXd phi(4, 3);
  phi << 0.3, -1.0, 0.5,
         1.2, 0.4, -0.7,
         -0.5, 0.9, 0.1,
         0.0, -0.2, 1.1;
  Eigen::VectorXd rewards(4);
  rewards << 1.0, 2.0, -1.0, 0.5;
  CategoricalSoftmaxModel model(phi, rewards);

  ParamVector theta(3);
  theta << 0.4, -0.3, 0.2;
  const Eigen::VectorXd p = model.category_probs(theta);
  const double h = 1e-5;
  for (int j = 0; j < 4; ++j) {
    const Eigen::VectorXd score = phi.row(j).transpose() - phi.transpose() * p;
    for (int d = 0; d < 3; ++d) {
      ParamVector up = theta, down = theta;
      up[d] += h;
      down[d] -= h;
      const double fd = (model.log_prob(j, up) - model.log_prob(j, down)) / (2.0 * h);
      CHECK(std::abs(score[d] - fd) <= 1e-6);
    }
  }
}

TEST_CASE("categorical score mean vanishes") {
  Eigen::MatrixXd phi(3, 2);
  phi << 1.0, 0.0, 0.0, 1.0, -1.0, 0.5;
  Eigen::VectorXd rewards(3);
  rewards << 2.0, 0.0, 1.0;
  CategoricalSoftmaxModel model(phi, rewards);
  ParamVector theta(2);
  theta << 0.7, -0.4;
  const Eigen::VectorXd mean = score_identity_check(model, theta, 1'000'000, 9);
  for (int d = 0; d < 2; ++d) CHECK(std::abs(mean[d]) < 4e-3);
}

TEST_CASE("rejects invalid construction") {
  Eigen::MatrixXd bad(2, 1);
  bad << 1.0, std::numeric_limits<double>::infinity();
  Eigen::VectorXd rewards(2);
  rewards << 1.0, 0.0;
  CHECK_THROWS_AS(CategoricalSoftmaxModel(bad, rewards), std::invalid_argument);

  Eigen::MatrixXd one(1, 1);
  one << 1.0;
  Eigen::VectorXd r1(1);
  r1 << 1.0;
  CHECK_THROWS_AS(CategoricalSoftmaxModel(one, r1), std::invalid_argument);

  GaussianMeanModel gaussian;
  Rng rng = make_rng(0);
  CHECK_THROWS_AS(gaussian.draw(Eigen::VectorXd::Zero(2), rng), std::invalid_argument);
}

TEST_CASE("smoothing noise stays inside its half-width") {
  Eigen::MatrixXd phi(2, 1);
  phi << 1.0, 0.0;
  Eigen::VectorXd rewards(2);
  rewards << 1.0, 0.0;
  CategoricalSoftmaxModel model(phi, rewards, 0.25);
  Rng rng = make_rng(5);
  const ParamVector theta = Eigen::VectorXd::Zero(1);
  for (int i = 0; i < 1000; ++i) {
    const ScoredSample s = model.draw(theta, rng);
    const double base = rewards[s.outcome[0]];
    CHECK(std::abs(s.reward - base) <= 0.25);
  }
}

TEST_CASE("identical theta and seed give identical sample streams") {
  GaussianMeanModel model;
  const ParamVector theta = Eigen::VectorXd::Constant(1, 0.3);
  const auto a = draw_batch(model, theta, 1000, 123);
  const auto b = draw_batch(model, theta, 1000, 123);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].reward == b[i].reward);
    CHECK(a[i].score[0] == b[i].score[0]);
  }
}

TEST_CASE("batches are independent of the thread count") {
  GaussianMeanModel model;
  const ParamVector theta = Eigen::VectorXd::Constant(1, -0.7);
  const auto serial = draw_batch(model, theta, 999, 55, 1);
  const auto parallel = draw_batch(model, theta, 999, 55, 4);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].reward == parallel[i].reward);
  }
}

}  // TEST_SUITE
