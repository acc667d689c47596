#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cvar/gcvar.hpp"
#include "cvar/importance_sampling.hpp"
#include "cvar/model.hpp"

namespace cvar {

// The compact parameter set the iterates are projected onto.
struct ProjectionBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static ProjectionBox symmetric(int dim, double radius);
  void validate(int dim) const;
};

// Componentwise clamp into [lower, upper].
ParamVector project(const ProjectionBox& box, const ParamVector& theta);

// Step sizes eps_i, i >= 1. The harmonic default eps0/i is square-summable
// but not summable, which is what the convergence conditions ask of the
// schedule.
struct StepSchedule {
  enum class Kind { Harmonic, Constant };
  Kind kind = Kind::Harmonic;
  double eps0 = 1.0;

  double at(std::int64_t iteration) const;
};

// Batch sizes n_i. The polylog default max(n_min, ceil(log(i+1)^4)) grows
// without bound (driving the estimator bias to zero) while staying cheap;
// the floor keeps a few tail samples in every batch. The fixed schedule
// reproduces constant-batch experimental protocols.
struct BatchSchedule {
  enum class Kind { PolyLog, Fixed };
  Kind kind = Kind::PolyLog;
  std::int64_t fixed_n = 1000;
  std::int64_t n_min = 1;

  std::int64_t at(std::int64_t iteration) const;
};

struct Schedules {
  StepSchedule step;
  BatchSchedule batch;

  // Harmonic steps and the polylog batch with n_min = ceil(4/alpha).
  static Schedules defaults(double alpha, double eps0 = 1.0);
};

enum class EstimatorKind { Crude, ImportanceSampling, PlainPg };

struct SaaSettings {
  std::int64_t n = 1000;
  int gd_steps = 100;
  double gd_rate = 0.05;
};

struct IterationRecord {
  std::int64_t iteration = 0;
  ParamVector theta;  // post-update, inside the box
  double step_size = 0.0;
  std::int64_t batch_size = 0;
  double var_used = 0.0;
  std::int64_t tail_count = 0;
  double mean_return = 0.0;  // of the iteration's sampling batch
  double cvar_return = 0.0;
  double wall_time_s = 0.0;
};

struct RunTrace {
  std::vector<IterationRecord> records;
  ParamVector final_theta;
  bool aborted = false;
  std::int64_t failed_iteration = 0;
  std::string failure;
};

struct CvarSgdOptions {
  double alpha = 0.05;
  ProjectionBox box;
  Schedules schedules;
  std::int64_t iterations = 100;
  std::uint64_t seed = 0;
  EstimatorKind estimator = EstimatorKind::Crude;
  int refit_period = 50;  // proposal refit cadence (importance sampling only)
  SaaSettings saa;        // proposal fit settings (importance sampling only)
  int n_threads = 1;

  // Invoked after each recorded iteration; lets callers stream the trace to
  // disk at iteration boundaries.
  std::function<void(const IterationRecord&)> on_iteration;
};

// Projected stochastic gradient ascent on the alpha-CVaR of the model's
// reward: theta <- project(theta + eps_i * Delta_i) with Delta_i the chosen
// gradient estimate on a fresh batch of size n_i. Deterministic given the
// seed (per-iteration batch substreams). On a reweighted-quantile failure
// the run aborts cleanly, returning the trace so far with the failing
// iteration marked. PlainPg substitutes the expectation gradient and turns
// the loop into the standard policy-gradient trainer used for comparisons.
//
// For the ImportanceSampling estimator a proposal must be supplied; its
// parameter is refit from nominal-distribution samples every refit_period
// iterations. Other estimators ignore `proposal`.
RunTrace cvar_sgd(const Model& model, const Proposal* proposal, const ParamVector& theta0,
                  const CvarSgdOptions& options);

struct RewardHistogram {
  std::vector<double> edges;         // n_bins + 1 ascending
  std::vector<std::int64_t> counts;  // n_bins
};

struct PolicyEvaluation {
  double mean = 0.0;
  double cvar = 0.0;
  RewardHistogram histogram;
};

// Monte-Carlo evaluation of a fixed parameter: batch mean, empirical CVaR at
// alpha, and a fixed-bin reward histogram. Requires n_eval >= ceil(1/alpha).
PolicyEvaluation evaluate_policy(const Model& model, const ParamVector& theta, double alpha,
                                 std::int64_t n_eval, std::uint64_t seed, int n_bins = 50,
                                 int n_threads = 1);

}  // namespace cvar
