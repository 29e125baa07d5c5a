#include "reirl/knn_policy.hpp"
#include "reirl/rng.hpp"

#include <benchmark/benchmark.h>

using namespace reirl;

namespace {

HistoricalPool make_pool(std::int64_t n, int K, double missing_rate) {
  SeedStream stream(7, "bench-pool");
  HistoricalPool pool;
  pool.states.resize(n, K);
  pool.actions.reserve(n);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      pool.states(i, k) =
          stream.next_unit() < missing_rate ? missing_value() : stream.next_normal();
    }
    pool.actions.push_back(static_cast<int>(stream.next_u64() % 7) - 3);
    pool.entities.push_back("e");
    pool.periods.push_back(0);
  }
  return pool;
}

void BM_NeighborScan(benchmark::State& state) {
  const auto n = state.range(0);
  const int K = static_cast<int>(state.range(1));
  const double missing_rate = state.range(2) / 100.0;
  const auto pool = make_pool(n, K, missing_rate);
  const Mat omega = Mat::Identity(K, K);
  const Vec query = Vec::Zero(K);
  for (auto _ : state) {
    benchmark::DoNotOptimize(knn_probs(query, pool, omega, 50, (K + 1) / 2));
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_PairwiseCovariance(benchmark::State& state) {
  const auto pool = make_pool(state.range(0), 8, 0.2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pairwise_covariance(pool.states));
  }
}

}  // namespace

BENCHMARK(BM_NeighborScan)->Args({10000, 3, 0})->Args({50000, 3, 0})->Args({10000, 8, 20});
BENCHMARK(BM_PairwiseCovariance)->Arg(10000)->Arg(50000);
