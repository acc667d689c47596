#include "cvar/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cvar/oracle.hpp"

namespace cvar {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

int thread_count_from_env() {
  const char* raw = std::getenv("CVAR_THREADS");
  if (raw == nullptr) return 1;
  const int parsed = std::atoi(raw);
  return std::clamp(parsed, 1, 64);
}

namespace {

[[noreturn]] void config_fail(const std::string& msg) { throw ConfigError("config: " + msg); }

ExperimentKind parse_kind(const std::string& kind) {
  if (kind == "train") return ExperimentKind::Train;
  if (kind == "evaluate") return ExperimentKind::Evaluate;
  if (kind == "bias_study") return ExperimentKind::BiasStudy;
  if (kind == "variance_comparison") return ExperimentKind::VarianceComparison;
  if (kind == "oracle_check") return ExperimentKind::OracleCheck;
  config_fail("unknown experiment kind '" + kind + "'");
}

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Evaluate: return "evaluate";
    case ExperimentKind::BiasStudy: return "bias_study";
    case ExperimentKind::VarianceComparison: return "variance_comparison";
    case ExperimentKind::OracleCheck: return "oracle_check";
  }
  return "?";
}

Eigen::VectorXd parse_vector(const json& arr, const char* what) {
  if (!arr.is_array() || arr.empty()) config_fail(std::string(what) + " must be a non-empty array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

void parse_model(const json& m, ExperimentConfig& cfg) {
  if (!m.is_object() || !m.contains("type")) config_fail("model needs a type");
  cfg.model_type = m.at("type").get<std::string>();

  int dim = 0;
  if (cfg.model_type == "gaussian") {
    dim = 1;
  } else if (cfg.model_type == "categorical") {
    const auto& feats = m.at("features");
    if (!feats.is_array() || feats.empty()) config_fail("categorical features must be a matrix");
    const auto rows = static_cast<Eigen::Index>(feats.size());
    const auto cols = static_cast<Eigen::Index>(feats[0].size());
    cfg.categorical_features.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (static_cast<Eigen::Index>(feats[static_cast<std::size_t>(r)].size()) != cols) {
        config_fail("categorical feature rows must have equal length");
      }
      for (Eigen::Index c = 0; c < cols; ++c) {
        cfg.categorical_features(r, c) = feats[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
      }
    }
    cfg.categorical_rewards = parse_vector(m.at("rewards"), "categorical rewards");
    cfg.categorical_smoothing = m.value("smoothing", 0.0);
    dim = static_cast<int>(cols);
  } else if (cfg.model_type == "chain") {
    cfg.chain.n_steps = m.value("n_steps", 1);
    cfg.chain.safe_reward = m.value("safe_reward", 1.0);
    cfg.chain.risky_low = m.value("risky_low", 0.0);
    cfg.chain.risky_high = m.value("risky_high", 3.0);
    cfg.chain.risky_low_prob = m.value("risky_low_prob", 0.5);
    cfg.chain.smoothing = m.value("smoothing", 0.0);
    dim = 2;
  } else if (cfg.model_type == "tetris") {
    cfg.tetris.width = m.value("width", 6);
    cfg.tetris.height = m.value("height", 12);
    if (m.contains("pieces")) {
      cfg.tetris.pieces.clear();
      for (const auto& p : m.at("pieces")) {
        const auto s = p.get<std::string>();
        if (s.size() != 1) config_fail("tetris pieces must be single letters");
        cfg.tetris.pieces.push_back(s[0]);
      }
    }
    if (m.contains("line_scores")) {
      const auto& scores = m.at("line_scores");
      if (scores.size() != 4) config_fail("line_scores must have 4 entries");
      for (std::size_t i = 0; i < 4; ++i) cfg.tetris.line_scores[i] = scores[i].get<double>();
    }
    cfg.tetris.step_cap = m.value("step_cap", std::int64_t{300});
    cfg.tetris.smoothing = m.value("smoothing", 0.0);
    cfg.tetris.validate();
    dim = tetris_feature_dim();
  } else {
    config_fail("unknown model type '" + cfg.model_type + "'");
  }

  if (m.contains("theta0")) {
    cfg.theta0 = parse_vector(m.at("theta0"), "theta0");
    if (cfg.theta0.size() != dim) config_fail("theta0 has the wrong dimension for this model");
  } else {
    cfg.theta0 = Eigen::VectorXd::Zero(dim);
  }
}

void parse_estimator(const json& e, ExperimentConfig& cfg) {
  const auto type = e.value("type", std::string("crude"));
  if (type == "crude") {
    cfg.estimator.kind = EstimatorKind::Crude;
  } else if (type == "is") {
    cfg.estimator.kind = EstimatorKind::ImportanceSampling;
    cfg.estimator.refit_period = e.value("refit_period", 50);
    if (cfg.estimator.refit_period < 1) config_fail("refit_period must be >= 1");
    if (e.contains("saa")) {
      const auto& s = e.at("saa");
      cfg.estimator.saa.n = s.value("n", std::int64_t{1000});
      cfg.estimator.saa.gd_steps = s.value("gd_steps", 100);
      cfg.estimator.saa.gd_rate = s.value("gd_rate", 0.05);
    }
  } else if (type == "plain") {
    cfg.estimator.kind = EstimatorKind::PlainPg;
  } else {
    config_fail("unknown estimator type '" + type + "'");
  }
}

void parse_schedules(const json& s, ExperimentConfig& cfg) {
  if (s.contains("step")) {
    const auto& st = s.at("step");
    const auto kind = st.value("kind", std::string("harmonic"));
    if (kind == "harmonic") {
      cfg.schedules.step.kind = StepSchedule::Kind::Harmonic;
    } else if (kind == "constant") {
      cfg.schedules.step.kind = StepSchedule::Kind::Constant;
    } else {
      config_fail("unknown step schedule '" + kind + "'");
    }
    cfg.schedules.step.eps0 = st.value("eps0", 1.0);
    if (cfg.schedules.step.eps0 <= 0.0) config_fail("eps0 must be positive");
  }
  if (s.contains("batch")) {
    const auto& b = s.at("batch");
    const auto kind = b.value("kind", std::string("polylog"));
    if (kind == "polylog") {
      cfg.schedules.batch.kind = BatchSchedule::Kind::PolyLog;
      cfg.schedules.batch.n_min = b.value("n_min", cfg.schedules.batch.n_min);
    } else if (kind == "fixed") {
      cfg.schedules.batch.kind = BatchSchedule::Kind::Fixed;
      cfg.schedules.batch.fixed_n = b.value("n", std::int64_t{1000});
    } else {
      config_fail("unknown batch schedule '" + kind + "'");
    }
    if (cfg.schedules.batch.at(1) < 1) config_fail("batch schedule must produce sizes >= 1");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    config_fail(std::string("invalid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  cfg.schema_version = j.value("schema_version", 0);
  if (cfg.schema_version != 1) config_fail("schema_version must be 1");
  if (!j.contains("kind")) config_fail("missing 'kind'");
  cfg.kind = parse_kind(j.at("kind").get<std::string>());

  cfg.alpha = j.value("alpha", 0.05);
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) config_fail("alpha must be in (0,1)");

  if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty()) {
    config_fail("seeds must be a non-empty array");
  }
  for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());

  cfg.output_dir = j.value("output_dir", std::string());
  if (!j.contains("model")) config_fail("missing 'model'");
  parse_model(j.at("model"), cfg);

  cfg.schedules = Schedules::defaults(cfg.alpha);
  if (j.contains("estimator")) parse_estimator(j.at("estimator"), cfg);
  if (j.contains("schedules")) parse_schedules(j.at("schedules"), cfg);

  cfg.iterations = j.value("iterations", std::int64_t{100});
  if (cfg.iterations < 0) config_fail("iterations must be >= 0");

  if (j.contains("box")) {
    const auto& b = j.at("box");
    if (b.contains("radius")) {
      cfg.box_radius = b.at("radius").get<double>();
      if (cfg.box_radius <= 0.0) config_fail("box radius must be positive");
    }
    if (b.contains("lower") || b.contains("upper")) {
      ProjectionBox box;
      box.lower = parse_vector(b.at("lower"), "box lower");
      box.upper = parse_vector(b.at("upper"), "box upper");
      cfg.box = box;
    }
  }

  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    cfg.evaluation.n_eval = e.value("n_eval", std::int64_t{10000});
    cfg.evaluation.n_bins = e.value("n_bins", 50);
    if (cfg.evaluation.n_bins < 1) config_fail("n_bins must be >= 1");
  }

  if (j.contains("warm_start")) {
    const auto& w = j.at("warm_start");
    cfg.warm_start.iterations = w.value("iterations", std::int64_t{0});
    cfg.warm_start.batch = w.value("batch", std::int64_t{500});
    cfg.warm_start.eps0 = w.value("eps0", 1.0);
    cfg.warm_start.seed = w.value("seed", std::uint64_t{7});
    if (cfg.warm_start.iterations < 0 || cfg.warm_start.batch < 1) {
      config_fail("warm_start needs iterations >= 0 and batch >= 1");
    }
  }

  if (j.contains("batch_sizes")) {
    cfg.bias_batch_sizes.clear();
    for (const auto& n : j.at("batch_sizes")) cfg.bias_batch_sizes.push_back(n.get<std::int64_t>());
    if (cfg.bias_batch_sizes.empty()) config_fail("batch_sizes must be non-empty");
  }
  cfg.replications = j.value("replications", 200);
  if (cfg.replications < 1) config_fail("replications must be >= 1");
  cfg.comparison_batch = j.value("n", cfg.kind == ExperimentKind::OracleCheck
                                          ? std::int64_t{1'000'000}
                                          : std::int64_t{200});
  if (cfg.kind == ExperimentKind::OracleCheck) cfg.oracle_batch = cfg.comparison_batch;
  cfg.oracle_rel_tolerance = j.value("rel_tolerance", 0.02);
  cfg.oracle_abs_tolerance = j.value("abs_tolerance", 1e-3);
  cfg.variance_ratio_threshold = j.value("ratio_threshold", 0.5);

  // Kind/model consistency checks that need the whole picture.
  if (cfg.kind == ExperimentKind::OracleCheck && cfg.model_type != "chain") {
    config_fail("oracle_check requires the chain model (exact enumeration)");
  }
  if (cfg.kind == ExperimentKind::BiasStudy &&
      !(cfg.model_type == "gaussian" || cfg.model_type == "chain")) {
    config_fail("bias_study needs a model with an oracle gradient (gaussian or chain)");
  }
  if (cfg.estimator.kind == EstimatorKind::ImportanceSampling &&
      !(cfg.model_type == "gaussian" || cfg.model_type == "chain")) {
    config_fail("no importance-sampling proposal family for model type '" + cfg.model_type + "'");
  }
  if (cfg.kind == ExperimentKind::VarianceComparison &&
      !(cfg.model_type == "gaussian" || cfg.model_type == "chain")) {
    config_fail("variance_comparison needs a proposal family (gaussian or chain)");
  }

  cfg.canonical_json = j.dump();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.canonical_json) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::unique_ptr<Model> build_model(const ExperimentConfig& config) {
  if (config.model_type == "gaussian") return std::make_unique<GaussianMeanModel>();
  if (config.model_type == "categorical") {
    return std::make_unique<CategoricalSoftmaxModel>(config.categorical_features,
                                                     config.categorical_rewards,
                                                     config.categorical_smoothing);
  }
  if (config.model_type == "chain") {
    auto env = build_chain(config.chain);
    return std::make_unique<MdpModel>(std::move(env.mdp), std::move(env.policy));
  }
  if (config.model_type == "tetris") return std::make_unique<TetrisModel>(config.tetris);
  config_fail("unknown model type '" + config.model_type + "'");
}

std::unique_ptr<Proposal> build_proposal(const ExperimentConfig& config) {
  if (config.model_type == "gaussian") return std::make_unique<GaussianMeanShiftProposal>();
  if (config.model_type == "chain") {
    auto env = build_chain(config.chain);
    return std::make_unique<MdpTiltProposal>(std::move(env.mdp), std::move(env.policy));
  }
  config_fail("no importance-sampling proposal family for model type '" + config.model_type + "'");
}

ProjectionBox resolve_box(const ExperimentConfig& config, int dim) {
  if (config.box.has_value()) {
    config.box->validate(dim);
    return *config.box;
  }
  return ProjectionBox::symmetric(dim, config.box_radius);
}

namespace {

constexpr std::uint64_t kEvalStream = 1'000'000'007ULL;

std::vector<std::string> theta_names(const ExperimentConfig& config, int dim) {
  if (config.model_type == "tetris") return tetris_feature_names();
  if (config.model_type == "chain") return {"safe_pref", "risky_pref"};
  std::vector<std::string> names;
  for (int i = 0; i < dim; ++i) names.push_back("theta_" + std::to_string(i));
  return names;
}

struct ArtifactWriter {
  fs::path dir;
  std::vector<std::string> names;

  std::ofstream open(const std::string& name) {
    names.push_back(name);
    std::ofstream out(dir / name);
    if (!out) config_fail("cannot write artifact '" + (dir / name).string() + "'");
    return out;
  }
};

void write_manifest(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                    ArtifactWriter& writer) {
  json manifest;
  manifest["schema_version"] = 1;
  manifest["code_version"] = kCodeVersion;
  manifest["kind"] = kind_name(config.kind);
  manifest["config_hash"] = config_hash(config);
  manifest["seeds"] = seeds;
  manifest["config"] = json::parse(config.canonical_json);
  manifest["artifacts"] = writer.names;  // everything written before the manifest
  auto out = writer.open("manifest.json");
  out << manifest.dump(2) << '\n';
}

void write_histogram_csv(std::ofstream& out, const RewardHistogram& hist) {
  out << "bin_left,bin_right,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    out << format_double(hist.edges[b]) << ',' << format_double(hist.edges[b + 1]) << ','
        << hist.counts[b] << '\n';
  }
}

void write_theta_csv(std::ofstream& out, const std::vector<std::string>& names,
                     const ParamVector& theta) {
  out << "index,name,value\n";
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    out << i << ',' << names[static_cast<std::size_t>(i)] << ',' << format_double(theta[i])
        << '\n';
  }
}

std::string train_csv_header(int dim) {
  std::string header = "iteration,mean_return,cvar_return";
  for (int i = 0; i < dim; ++i) header += ",theta_" + std::to_string(i);
  header += ",var_used,tail_count";
  return header;
}

int run_train(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
              int n_threads, ArtifactWriter& writer, std::ostream& log) {
  const auto model = build_model(config);
  std::unique_ptr<Proposal> proposal;
  if (config.estimator.kind == EstimatorKind::ImportanceSampling) {
    proposal = build_proposal(config);
  }
  const int dim = model->param_dim();
  const ProjectionBox box = resolve_box(config, dim);

  ParamVector theta_start = config.theta0;
  if (config.warm_start.iterations > 0) {
    CvarSgdOptions warm;
    warm.alpha = config.alpha;
    warm.box = box;
    warm.schedules.step = {StepSchedule::Kind::Harmonic, config.warm_start.eps0};
    warm.schedules.batch = {BatchSchedule::Kind::Fixed, config.warm_start.batch, 1};
    warm.iterations = config.warm_start.iterations;
    warm.seed = config.warm_start.seed;
    warm.estimator = EstimatorKind::PlainPg;
    warm.n_threads = n_threads;
    theta_start = cvar_sgd(*model, nullptr, config.theta0, warm).final_theta;
    log << "warm start finished after " << config.warm_start.iterations << " iterations\n";
  }

  const auto names = theta_names(config, dim);
  json per_seed = json::array();
  bool any_aborted = false;

  for (const std::uint64_t seed : seeds) {
    auto csv = writer.open("train_seed" + std::to_string(seed) + ".csv");
    csv << train_csv_header(dim) << '\n';
    csv.flush();

    CvarSgdOptions opts;
    opts.alpha = config.alpha;
    opts.box = box;
    opts.schedules = config.schedules;
    opts.iterations = config.iterations;
    opts.seed = seed;
    opts.estimator = config.estimator.kind;
    opts.refit_period = config.estimator.refit_period;
    opts.saa = config.estimator.saa;
    opts.n_threads = n_threads;
    opts.on_iteration = [&](const IterationRecord& rec) {
      csv << rec.iteration << ',' << format_double(rec.mean_return) << ','
          << format_double(rec.cvar_return);
      for (Eigen::Index i = 0; i < rec.theta.size(); ++i) {
        csv << ',' << format_double(rec.theta[i]);
      }
      csv << ',' << format_double(rec.var_used) << ',' << rec.tail_count << '\n';
      csv.flush();  // keep partial traces intact on a crash
    };

    const RunTrace trace = cvar_sgd(*model, proposal.get(), theta_start, opts);
    any_aborted = any_aborted || trace.aborted;

    const PolicyEvaluation eval =
        evaluate_policy(*model, trace.final_theta, config.alpha, config.evaluation.n_eval,
                        substream_seed(seed, kEvalStream), config.evaluation.n_bins, n_threads);
    {
      auto hist = writer.open("hist_seed" + std::to_string(seed) + ".csv");
      write_histogram_csv(hist, eval.histogram);
    }
    {
      auto theta = writer.open("theta_seed" + std::to_string(seed) + ".csv");
      write_theta_csv(theta, names, trace.final_theta);
    }

    json row;
    row["seed"] = seed;
    row["final_theta"] = std::vector<double>(trace.final_theta.begin(), trace.final_theta.end());
    row["eval_mean"] = eval.mean;
    row["eval_cvar"] = eval.cvar;
    row["iterations_run"] = trace.records.size();
    row["aborted"] = trace.aborted;
    if (trace.aborted) {
      row["failed_iteration"] = trace.failed_iteration;
      row["failure"] = trace.failure;
      log << "seed " << seed << ": aborted at iteration " << trace.failed_iteration << ": "
          << trace.failure << '\n';
    } else {
      log << "seed " << seed << ": eval mean " << eval.mean << ", cvar " << eval.cvar << '\n';
    }
    per_seed.push_back(std::move(row));
  }

  json summary;
  summary["kind"] = kind_name(config.kind);
  summary["per_seed"] = std::move(per_seed);
  double mean_sum = 0.0, cvar_sum = 0.0;
  for (const auto& row : summary["per_seed"]) {
    mean_sum += row["eval_mean"].get<double>();
    cvar_sum += row["eval_cvar"].get<double>();
  }
  summary["eval_mean"] = mean_sum / static_cast<double>(seeds.size());
  summary["eval_cvar"] = cvar_sum / static_cast<double>(seeds.size());
  auto out = writer.open("summary.json");
  out << summary.dump(2) << '\n';
  return any_aborted ? 1 : 0;
}

int run_evaluate(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                 int n_threads, ArtifactWriter& writer, std::ostream& log) {
  const auto model = build_model(config);
  json per_seed = json::array();
  for (const std::uint64_t seed : seeds) {
    const PolicyEvaluation eval =
        evaluate_policy(*model, config.theta0, config.alpha, config.evaluation.n_eval,
                        substream_seed(seed, kEvalStream), config.evaluation.n_bins, n_threads);
    auto hist = writer.open("hist_seed" + std::to_string(seed) + ".csv");
    write_histogram_csv(hist, eval.histogram);
    json row;
    row["seed"] = seed;
    row["eval_mean"] = eval.mean;
    row["eval_cvar"] = eval.cvar;
    per_seed.push_back(std::move(row));
    log << "seed " << seed << ": mean " << eval.mean << ", cvar " << eval.cvar << '\n';
  }

  json summary;
  summary["kind"] = kind_name(config.kind);
  summary["per_seed"] = per_seed;
  double mean_sum = 0.0, cvar_sum = 0.0;
  for (const auto& row : per_seed) {
    mean_sum += row["eval_mean"].get<double>();
    cvar_sum += row["eval_cvar"].get<double>();
  }
  summary["eval_mean"] = mean_sum / static_cast<double>(seeds.size());
  summary["eval_cvar"] = cvar_sum / static_cast<double>(seeds.size());
  auto out = writer.open("summary.json");
  out << summary.dump(2) << '\n';
  return 0;
}

Eigen::VectorXd oracle_gradient(const ExperimentConfig& config) {
  if (config.model_type == "gaussian") {
    return Eigen::VectorXd::Constant(1, gaussian_truth(config.theta0[0], config.alpha).grad);
  }
  const auto env = build_chain(config.chain);
  return fd_cvar_gradient(env.mdp, env.policy, config.theta0, config.alpha).grad;
}

int run_bias_study(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                   int n_threads, ArtifactWriter& writer, std::ostream& log) {
  const auto model = build_model(config);
  const Eigen::VectorXd truth = oracle_gradient(config);

  json per_seed = json::array();
  for (const std::uint64_t seed : seeds) {
    const auto rows = bias_study(*model, config.theta0, config.alpha, config.bias_batch_sizes,
                                 config.replications, truth, seed, n_threads);
    auto csv = writer.open("bias_seed" + std::to_string(seed) + ".csv");
    csv << "n,mean_abs_bias\n";
    for (const auto& row : rows) {
      csv << row.n << ',' << format_double(row.mean_abs_bias) << '\n';
    }
    const double slope = rows.size() >= 2 ? loglog_slope(rows) : 0.0;
    json entry;
    entry["seed"] = seed;
    entry["slope"] = slope;
    per_seed.push_back(std::move(entry));
    log << "seed " << seed << ": log-log bias slope " << slope << '\n';
  }

  json summary;
  summary["kind"] = kind_name(config.kind);
  summary["true_gradient"] = std::vector<double>(truth.begin(), truth.end());
  summary["per_seed"] = std::move(per_seed);
  auto out = writer.open("summary.json");
  out << summary.dump(2) << '\n';
  return 0;
}

int run_variance_comparison(const ExperimentConfig& config,
                            const std::vector<std::uint64_t>& seeds, int n_threads,
                            ArtifactWriter& writer, std::ostream& log) {
  const auto model = build_model(config);
  const auto proposal = build_proposal(config);

  json per_seed = json::array();
  for (const std::uint64_t seed : seeds) {
    const SaaFit fit = fit_proposal_saa(*model, *proposal, config.theta0, config.alpha,
                                        config.estimator.saa.n, config.estimator.saa.gd_steps,
                                        config.estimator.saa.gd_rate,
                                        substream_seed(seed, 1), n_threads);
    const VarianceComparison vc =
        variance_comparison(*model, *proposal, config.theta0, config.alpha, fit.omega,
                            config.comparison_batch, config.replications,
                            substream_seed(seed, 2), n_threads);

    auto csv = writer.open("variance_seed" + std::to_string(seed) + ".csv");
    csv << "component,var_crude,var_is,ratio\n";
    double worst_ratio = 0.0;
    for (Eigen::Index i = 0; i < vc.var_crude.size(); ++i) {
      const double ratio = vc.var_is[i] / vc.var_crude[i];
      worst_ratio = std::max(worst_ratio, ratio);
      csv << i << ',' << format_double(vc.var_crude[i]) << ',' << format_double(vc.var_is[i])
          << ',' << format_double(ratio) << '\n';
    }

    json entry;
    entry["seed"] = seed;
    entry["omega"] = std::vector<double>(fit.omega.begin(), fit.omega.end());
    entry["worst_ratio"] = worst_ratio;
    entry["within_threshold"] = worst_ratio <= config.variance_ratio_threshold;
    per_seed.push_back(std::move(entry));
    log << "seed " << seed << ": worst variance ratio " << worst_ratio << '\n';
  }

  json summary;
  summary["kind"] = kind_name(config.kind);
  summary["ratio_threshold"] = config.variance_ratio_threshold;
  summary["per_seed"] = std::move(per_seed);
  auto out = writer.open("summary.json");
  out << summary.dump(2) << '\n';
  return 0;
}

int run_oracle_check(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                     int n_threads, ArtifactWriter& writer, std::ostream& log) {
  const auto env = build_chain(config.chain);
  const MdpModel model(env.mdp, env.policy);
  const FdCvarGradient truth =
      fd_cvar_gradient(env.mdp, env.policy, config.theta0, config.alpha);

  bool all_pass = true;
  json per_seed = json::array();
  auto csv = writer.open("oracle_check.csv");
  csv << "seed,component,estimate,truth,abs_error,rel_error,pass\n";
  log << "estimator vs oracle, n=" << config.oracle_batch << ", alpha=" << config.alpha << '\n';
  for (const std::uint64_t seed : seeds) {
    const auto batch = draw_batch(model, config.theta0, config.oracle_batch, seed, n_threads);
    const GradientEstimate est = gcvar_estimate(batch, config.alpha);
    for (Eigen::Index i = 0; i < est.grad.size(); ++i) {
      const double abs_err = std::abs(est.grad[i] - truth.grad[i]);
      const bool small_truth = std::abs(truth.grad[i]) < config.oracle_abs_tolerance;
      const double rel_err = small_truth ? 0.0 : abs_err / std::abs(truth.grad[i]);
      const bool pass = small_truth ? abs_err <= config.oracle_abs_tolerance
                                    : rel_err <= config.oracle_rel_tolerance;
      all_pass = all_pass && pass;
      csv << seed << ',' << i << ',' << format_double(est.grad[i]) << ','
          << format_double(truth.grad[i]) << ',' << format_double(abs_err) << ','
          << format_double(rel_err) << ',' << (pass ? 1 : 0) << '\n';
      log << "seed " << seed << " component " << i << ": estimate " << est.grad[i]
          << " truth " << truth.grad[i] << " rel_error " << rel_err
          << (pass ? "  ok" : "  OUT OF TOLERANCE") << '\n';
    }
    json entry;
    entry["seed"] = seed;
    entry["estimate"] = std::vector<double>(est.grad.begin(), est.grad.end());
    per_seed.push_back(std::move(entry));
  }

  json summary;
  summary["kind"] = kind_name(config.kind);
  summary["true_gradient"] = std::vector<double>(truth.grad.begin(), truth.grad.end());
  summary["rel_tolerance"] = config.oracle_rel_tolerance;
  summary["abs_tolerance"] = config.oracle_abs_tolerance;
  summary["pass"] = all_pass;
  summary["per_seed"] = std::move(per_seed);
  auto out = writer.open("summary.json");
  out << summary.dump(2) << '\n';
  return all_pass ? 0 : 2;
}

}  // namespace

int run_experiment(const ExperimentConfig& config, const RunOptions& options,
                   std::ostream& log) {
  const std::string out_dir =
      options.output_dir_override.empty() ? config.output_dir : options.output_dir_override;
  if (out_dir.empty()) config_fail("no output directory (config output_dir or --output-dir)");
  const std::vector<std::uint64_t>& seeds =
      options.seeds_override.empty() ? config.seeds : options.seeds_override;

  ArtifactWriter writer{fs::path(out_dir), {}};
  std::error_code ec;
  fs::create_directories(writer.dir, ec);
  if (ec) config_fail("cannot create output directory '" + out_dir + "': " + ec.message());

  int status = 0;
  switch (config.kind) {
    case ExperimentKind::Train:
      status = run_train(config, seeds, options.n_threads, writer, log);
      break;
    case ExperimentKind::Evaluate:
      status = run_evaluate(config, seeds, options.n_threads, writer, log);
      break;
    case ExperimentKind::BiasStudy:
      status = run_bias_study(config, seeds, options.n_threads, writer, log);
      break;
    case ExperimentKind::VarianceComparison:
      status = run_variance_comparison(config, seeds, options.n_threads, writer, log);
      break;
    case ExperimentKind::OracleCheck:
      status = run_oracle_check(config, seeds, options.n_threads, writer, log);
      break;
  }
  write_manifest(config, seeds, writer);
  return status;
}

namespace {

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_fail("missing file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    config_fail("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

struct RunDigest {
  std::string kind;
  double mean = 0.0;
  double cvar = 0.0;
};

RunDigest digest_run(const std::string& dir) {
  const json manifest = load_json_file(fs::path(dir) / "manifest.json");
  const json summary = load_json_file(fs::path(dir) / "summary.json");
  RunDigest digest;
  digest.kind = manifest.value("kind", std::string());
  if (!summary.contains("eval_mean") || !summary.contains("eval_cvar")) {
    config_fail("run '" + dir + "' has no evaluation summary to compare (kind " +
                digest.kind + ")");
  }
  digest.mean = summary.at("eval_mean").get<double>();
  digest.cvar = summary.at("eval_cvar").get<double>();
  return digest;
}

}  // namespace

int compare_runs(const std::string& dir_a, const std::string& dir_b, std::ostream& out) {
  const RunDigest a = digest_run(dir_a);
  const RunDigest b = digest_run(dir_b);

  out << "run                mean            cvar\n";
  out << "a: " << dir_a << "  " << format_double(a.mean) << "  " << format_double(a.cvar) << '\n';
  out << "b: " << dir_b << "  " << format_double(b.mean) << "  " << format_double(b.cvar) << '\n';
  out << "a-b                " << format_double(a.mean - b.mean) << "  "
      << format_double(a.cvar - b.cvar) << '\n';

  json machine;
  machine["a"] = {{"dir", dir_a}, {"mean", a.mean}, {"cvar", a.cvar}};
  machine["b"] = {{"dir", dir_b}, {"mean", b.mean}, {"cvar", b.cvar}};
  machine["diff"] = {{"mean", a.mean - b.mean}, {"cvar", a.cvar - b.cvar}};
  out << machine.dump() << '\n';
  return 0;
}

}  // namespace cvar
