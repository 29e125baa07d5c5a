#include "reirl/oracle.hpp"
#include "reirl/simgen.hpp"

#include <benchmark/benchmark.h>

using namespace reirl;

namespace {

FiniteMDP bench_mdp(int n_states, int n_actions) {
  GeneratorSpec spec;
  spec.n_states = n_states;
  spec.n_actions = n_actions;
  spec.K = 3;
  spec.horizon = 1;
  spec.theta_star = Vec::Zero(3);
  spec.seed = 23;
  spec.transition_style = TransitionStyle::RandomDirichlet;
  return make_mdp(spec);
}

void BM_Enumerate(benchmark::State& state) {
  const auto mdp = bench_mdp(3, 2);
  const int horizon = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(enumerate_trajectories(mdp, horizon, 1.0));
  }
}

void BM_ExactPartition(benchmark::State& state) {
  const auto mdp = bench_mdp(3, 2);
  const auto space = enumerate_trajectories(mdp, static_cast<int>(state.range(0)), 1.0);
  Vec theta(3);
  theta << 0.4, -0.2, 0.7;
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_partition(theta, space));
  }
  state.SetItemsProcessed(state.iterations() * space.size());
}

void BM_SolvePrimal(benchmark::State& state) {
  const auto mdp = bench_mdp(4, 2);
  const auto space = enumerate_trajectories(mdp, static_cast<int>(state.range(0)), 1.0);
  Vec target(3);
  target << 0.6, -0.4, 0.2;
  const Vec shat = space.counts.transpose() * trajectory_distribution(target, space);
  ToleranceVector eps;
  eps.eps = Vec(3);
  eps.eps << 0.02, 0.1, 0.05;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_primal(space, shat, eps));
  }
}

}  // namespace

BENCHMARK(BM_Enumerate)->Arg(4)->Arg(6)->Arg(7);
BENCHMARK(BM_ExactPartition)->Arg(6)->Arg(7);
BENCHMARK(BM_SolvePrimal)->Arg(3)->Arg(5);
