#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cvar/environments.hpp"
#include "cvar/optimizer.hpp"
#include "cvar/tetris.hpp"

namespace cvar {

// Raised on malformed or inconsistent experiment configurations.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Train, Evaluate, BiasStudy, VarianceComparison, OracleCheck };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Crude;
  int refit_period = 50;
  SaaSettings saa;
};

struct EvaluationSpec {
  std::int64_t n_eval = 10000;
  int n_bins = 50;
};

// Optional plain-policy-gradient warm start shared by every seed of a run:
// a fixed-seed pretraining phase whose final parameter becomes the run's
// starting point.
struct WarmStartSpec {
  std::int64_t iterations = 0;  // 0 disables
  std::int64_t batch = 500;
  double eps0 = 1.0;
  std::uint64_t seed = 7;
};

// Declarative description of one experiment; the JSON schema mirrors the
// fields (see README for a worked example).
struct ExperimentConfig {
  int schema_version = 1;
  ExperimentKind kind = ExperimentKind::Train;

  std::string model_type;  // gaussian | categorical | chain | tetris
  ParamVector theta0;
  Eigen::MatrixXd categorical_features;
  Eigen::VectorXd categorical_rewards;
  double categorical_smoothing = 0.0;
  ChainMdpConfig chain;
  TetrisConfig tetris;

  EstimatorSpec estimator;
  double alpha = 0.05;
  Schedules schedules;
  std::int64_t iterations = 100;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::optional<ProjectionBox> box;
  double box_radius = 10.0;  // used when no explicit box is given
  EvaluationSpec evaluation;
  WarmStartSpec warm_start;

  // kind-specific knobs
  std::vector<std::int64_t> bias_batch_sizes = {100, 1000, 10000, 100000};
  int replications = 200;
  std::int64_t comparison_batch = 200;
  std::int64_t oracle_batch = 1'000'000;
  double oracle_rel_tolerance = 0.02;
  double oracle_abs_tolerance = 1e-3;
  double variance_ratio_threshold = 0.5;

  // canonical serialized form (hashing, manifest copy)
  std::string canonical_json;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// FNV-1a 64 over the canonical serialization, hex encoded.
std::string config_hash(const ExperimentConfig& config);

// Instantiates the configured model / proposal. The proposal builder throws
// ConfigError for model types without an importance-sampling family.
std::unique_ptr<Model> build_model(const ExperimentConfig& config);
std::unique_ptr<Proposal> build_proposal(const ExperimentConfig& config);
ProjectionBox resolve_box(const ExperimentConfig& config, int dim);

struct RunOptions {
  std::string output_dir_override;
  std::vector<std::uint64_t> seeds_override;
  int n_threads = 1;
};

// Executes the experiment and writes its artifacts (CSV traces, histograms,
// parameter dumps, manifest, summary) under the output directory. Returns
// the process exit status: 0 on success, nonzero on estimator failure or an
// out-of-tolerance oracle check. Training traces are flushed at every
// iteration boundary. Given identical config and seeds the artifacts are
// byte-identical across runs.
int run_experiment(const ExperimentConfig& config, const RunOptions& options,
                   std::ostream& log);

// Loads the manifests and summaries of two run directories and prints their
// final mean / CVaR and differences, followed by one machine-readable JSON
// line. Throws ConfigError on missing or incompatible manifests.
int compare_runs(const std::string& dir_a, const std::string& dir_b, std::ostream& out);

// Serializes a double with 17 significant digits (round-trip exact).
std::string format_double(double value);

inline constexpr const char* kCodeVersion = "0.1.0";

// Thread count from the CVAR_THREADS environment variable, default 1.
int thread_count_from_env();

}  // namespace cvar
