#include <benchmark/benchmark.h>

#include <map>

#include "ecodrive/energy.hpp"
#include "ecodrive/environment.hpp"
#include "ecodrive/harness.hpp"
#include "ecodrive/trainer.hpp"

namespace {

using namespace ecodrive;

void BM_FuelRate(benchmark::State& state) {
  const EnergyParams p;
  double v = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fuel_rate(v, 0.5, p));
    v = v > 15.0 ? 0.0 : v + 0.01;
  }
}
BENCHMARK(BM_FuelRate);

// One full human-only episode.
void BM_EpisodeVidm(benchmark::State& state) {
  auto cfg = std::make_shared<EnvConfig>();
  cfg->scenario.penetration_pct = 0.0;
  const Scenario s = build_scenario(cfg->scenario);
  for (auto _ : state) {
    World w = run_episode(cfg, s, 1);
    benchmark::DoNotOptimize(w.finished().size());
  }
  state.SetItemsProcessed(state.iterations() * cfg->scenario.horizon_steps);
}
BENCHMARK(BM_EpisodeVidm)->Unit(benchmark::kMillisecond);

void BM_EpisodePolicy(benchmark::State& state) {
  auto cfg = std::make_shared<EnvConfig>();
  const PolicyParams policy = make_policy(9, 0);
  const Scenario s = build_scenario(cfg->scenario);
  EpisodeOptions opt;
  opt.policy = &policy;
  for (auto _ : state) {
    World w = run_episode(cfg, s, 1, opt);
    benchmark::DoNotOptimize(w.finished().size());
  }
  state.SetItemsProcessed(state.iterations() * cfg->scenario.horizon_steps);
}
BENCHMARK(BM_EpisodePolicy)->Unit(benchmark::kMillisecond);

void BM_PolicyForward(benchmark::State& state) {
  const PolicyParams policy = make_policy(9, 0);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(9, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(policy.actor.forward(obs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PolicyForward)->Arg(1)->Arg(64)->Arg(4096);

void BM_PolicyUpdate(benchmark::State& state) {
  auto cfg = std::make_shared<EnvConfig>();
  const PolicyParams policy = make_policy(9, 0);
  RolloutBatch batch = collect_rollouts(policy, cfg, static_cast<int>(state.range(0)), 0);
  estimate_advantages(batch, policy, 0.99);
  TrainConfig tc;
  for (auto _ : state) {
    PolicyParams p = policy;
    benchmark::DoNotOptimize(policy_update(batch, p, tc).kl);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch.size()));
}
BENCHMARK(BM_PolicyUpdate)->Arg(8000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
