#include <benchmark/benchmark.h>

#include <random>

#include "hetqfl/qsim.hpp"

using namespace hetqfl;
using namespace hetqfl::qsim;

static void BM_Gate1QStatevector(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  auto psi = QuantumState::zero_state(q);
  const auto gate = Gate::h(q / 2);
  for (auto _ : state) {
    apply_gate_inplace(psi, gate);
    benchmark::DoNotOptimize(psi);
  }
  state.SetComplexityN(1 << q);
}
BENCHMARK(BM_Gate1QStatevector)->DenseRange(4, 12, 2)->Complexity();

static void BM_CnotStatevector(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  auto psi = QuantumState::zero_state(q);
  const auto gate = Gate::cnot(0, q - 1);
  for (auto _ : state) {
    apply_gate_inplace(psi, gate);
    benchmark::DoNotOptimize(psi);
  }
}
BENCHMARK(BM_CnotStatevector)->DenseRange(4, 12, 2);

static void BM_Gate1QDensity(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  auto rho = random_density(q, rng);
  const auto gate = Gate::rx(0.3, q / 2);
  for (auto _ : state) {
    apply_gate_inplace(rho, gate);
    benchmark::DoNotOptimize(rho);
  }
}
BENCHMARK(BM_Gate1QDensity)->DenseRange(2, 8, 2);

// The same thermal relaxation channel applied through the explicit Kraus
// sum and through the precomposed 4x4 superoperator. The superoperator's
// cost does not grow with the number of Kraus terms.
static void BM_ChannelKrausSum(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  auto rho = random_density(q, rng);
  const auto channel = thermal_relaxation(50.0, 70.0, 300.0);
  for (auto _ : state) {
    apply_channel_inplace(rho, channel, q / 2);
    benchmark::DoNotOptimize(rho);
  }
}
BENCHMARK(BM_ChannelKrausSum)->DenseRange(2, 8, 2);

static void BM_ChannelSuperop(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  CMatrix rho = random_density(q, rng).density();
  const auto super =
      ChannelSuperop::from_channel(thermal_relaxation(50.0, 70.0, 300.0));
  for (auto _ : state) {
    super.apply_inplace(rho, q, q / 2);
    benchmark::DoNotOptimize(rho);
  }
}
BENCHMARK(BM_ChannelSuperop)->DenseRange(2, 8, 2);

static void BM_TraceDistance(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  const auto a = random_density(q, rng);
  const auto b = random_density(q, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(trace_distance(a, b));
  }
}
BENCHMARK(BM_TraceDistance)->DenseRange(2, 6, 2);

BENCHMARK_MAIN();
