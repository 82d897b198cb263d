#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "ddet/lowrank.hpp"

using namespace ddet;

namespace {

// Snapshot-shaped matrices: many rows, a few hundred columns, decaying spectrum.
Eigen::MatrixXd snapshots(Eigen::Index rows, Eigen::Index cols) {
  std::mt19937 rng(1);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd u(rows, 20), v(20, cols);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = nd(rng) * std::pow(0.3, i % 20);
  return u * v;
}

void BM_Svd(benchmark::State& state) {
  const Eigen::MatrixXd a = snapshots(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(lowrank::truncated_svd(a).sigma.data());
}
BENCHMARK(BM_Svd)->Args({400, 50})->Args({6800, 300})->Unit(benchmark::kMillisecond);

void BM_Pod(benchmark::State& state) {
  const Eigen::MatrixXd a = snapshots(6800, 300);
  for (auto _ : state) benchmark::DoNotOptimize(lowrank::pod_compress(a, 1e-6).rank);
}
BENCHMARK(BM_Pod)->Unit(benchmark::kMillisecond);

void BM_Dmd(benchmark::State& state) {
  const Eigen::MatrixXd a = snapshots(6800, 300);
  for (auto _ : state)
    benchmark::DoNotOptimize(lowrank::dmd_compress(a, 1e-6, lowrank::DmdVariant::kPlain, 0.02).rank);
}
BENCHMARK(BM_Dmd)->Unit(benchmark::kMillisecond);

void BM_Reconstruct(benchmark::State& state) {
  const lowrank::CompressedModel m = lowrank::dmd_compress(snapshots(6800, 300), 1e-6,
                                                           lowrank::DmdVariant::kEquilibriumSubtracted, 0.02);
  int n = 0;
  for (auto _ : state) benchmark::DoNotOptimize(lowrank::reconstruct(m, n++ % 300).data());
}
BENCHMARK(BM_Reconstruct);

}  // namespace
