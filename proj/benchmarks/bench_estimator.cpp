#include "reirl/estimator.hpp"
#include "reirl/oracle.hpp"
#include "reirl/simgen.hpp"

#include <benchmark/benchmark.h>

using namespace reirl;

namespace {

GeneratorSpec bench_spec(std::int64_t n) {
  GeneratorSpec spec;
  spec.n_states = 5;
  spec.n_actions = 7;
  spec.K = 3;
  spec.horizon = 4;
  spec.N = n;
  spec.gamma = 1.0;
  spec.theta_star = Vec(3);
  spec.theta_star << 1.0, -0.5, 0.5;
  spec.seed = 11;
  spec.transition_style = TransitionStyle::DeterministicCycle;
  return spec;
}

void BM_GradientStep(benchmark::State& state) {
  const auto spec = bench_spec(state.range(0));
  const auto mdp = make_mdp(spec);
  const auto sample = sample_expert_set(mdp, spec.theta_star, spec.N, spec.horizon, spec.gamma,
                                        spec.seed);
  const auto batch = prepare_batch(sample.set, sample.exact_policy, mdp.n_actions);
  const Vec theta = 0.5 * spec.theta_star;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_batch(theta, batch));
  }
  state.SetItemsProcessed(state.iterations() * batch.included);
}

void BM_PrepareBatch(benchmark::State& state) {
  const auto spec = bench_spec(state.range(0));
  const auto mdp = make_mdp(spec);
  const auto sample = sample_expert_set(mdp, spec.theta_star, spec.N, spec.horizon, spec.gamma,
                                        spec.seed);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prepare_batch(sample.set, sample.exact_policy, mdp.n_actions));
  }
}

}  // namespace

BENCHMARK(BM_GradientStep)->Arg(1000)->Arg(5000)->Arg(20000);
BENCHMARK(BM_PrepareBatch)->Arg(1000)->Arg(5000);
