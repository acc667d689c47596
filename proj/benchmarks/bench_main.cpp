#include <benchmark/benchmark.h>

#include "cvar/empirical_risk.hpp"
#include "cvar/environments.hpp"
#include "cvar/gcvar.hpp"
#include "cvar/importance_sampling.hpp"
#include "cvar/model.hpp"
#include "cvar/oracle.hpp"
#include "cvar/tetris.hpp"

namespace {

using namespace cvar;

void BM_DrawBatchGaussian(benchmark::State& state) {
  GaussianMeanModel model;
  const ParamVector theta = Eigen::VectorXd::Zero(1);
  const auto n = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(draw_batch(model, theta, n, 42));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_DrawBatchGaussian)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);

void BM_EmpiricalCvar(benchmark::State& state) {
  Rng rng = make_rng(7);
  std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
  for (auto& r : rewards) r = draw_unit_normal(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(empirical_cvar(rewards, 0.05));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EmpiricalCvar)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);

void BM_GcvarEstimate(benchmark::State& state) {
  GaussianMeanModel model;
  const ParamVector theta = Eigen::VectorXd::Zero(1);
  const auto batch = draw_batch(model, theta, state.range(0), 43);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gcvar_estimate(batch, 0.05));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GcvarEstimate)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);

void BM_IsGcvarEstimate(benchmark::State& state) {
  GaussianMeanShiftProposal proposal;
  const ParamVector theta = Eigen::VectorXd::Zero(1);
  const auto batch = draw_is_batch(proposal, theta, Eigen::VectorXd::Constant(1, -1.0),
                                   state.range(0), 44);
  for (auto _ : state) {
    benchmark::DoNotOptimize(is_gcvar_estimate(batch, 0.05));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IsGcvarEstimate)->Arg(1 << 14);

void BM_ChainRollout(benchmark::State& state) {
  ChainMdpConfig config;
  config.n_steps = 4;
  const ChainEnv env = build_chain(config);
  ParamVector theta(2);
  theta << 0.3, -0.2;
  Rng rng = make_rng(45);
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate(env.mdp, env.policy, theta, rng));
  }
}
BENCHMARK(BM_ChainRollout);

void BM_ChainEnumeration(benchmark::State& state) {
  ChainMdpConfig config;
  config.n_steps = static_cast<int>(state.range(0));
  const ChainEnv env = build_chain(config);
  ParamVector theta(2);
  theta << 0.3, -0.2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(enumerate_mdp(env.mdp, env.policy, theta));
  }
}
BENCHMARK(BM_ChainEnumeration)->Arg(4)->Arg(8);

void BM_TetrisEpisode(benchmark::State& state) {
  const TetrisConfig config;
  const TetrisModel model(config);
  // Survival-flavored weights give realistic (long) episodes.
  Eigen::VectorXd theta(tetris_feature_dim());
  theta << -12.0, 4.0, -16.0, -10.0, -16.0, 0.0;
  Rng rng = make_rng(46);
  std::int64_t steps = 0;
  for (auto _ : state) {
    TetrisModel::EpisodeStats stats;
    benchmark::DoNotOptimize(model.draw_with_stats(theta, rng, &stats));
    steps += stats.steps;
  }
  state.SetItemsProcessed(steps);
}
BENCHMARK(BM_TetrisEpisode);

}  // namespace

BENCHMARK_MAIN();
