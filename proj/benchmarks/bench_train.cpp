#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hetqfl/encode.hpp"
#include "hetqfl/fed.hpp"
#include "hetqfl/qnn.hpp"

using namespace hetqfl;

namespace {

qnn::Sample make_sample(int num_qubits, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd x(1 << num_qubits);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = dist(rng);
  return {encode::amplitude_encode(x, num_qubits), 1};
}

qsim::NoiseConfig noisy() {
  qsim::NoiseConfig noise;
  noise.enabled = true;
  noise.gamma_ad = 0.05;
  return noise;
}

}  // namespace

static void BM_ForwardPure(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  const auto model = qnn::build_pqc(q, 2, 11);
  const auto sample = make_sample(q, 3);
  const qsim::NoiseConfig ideal;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qnn::forward(model, sample.state, ideal));
  }
}
BENCHMARK(BM_ForwardPure)->DenseRange(2, 8, 2);

static void BM_ForwardNoisy(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  const auto model = qnn::build_pqc(q, 2, 11);
  const auto sample = make_sample(q, 3);
  const auto noise = noisy();
  for (auto _ : state) {
    benchmark::DoNotOptimize(qnn::forward(model, sample.state, noise));
  }
}
BENCHMARK(BM_ForwardNoisy)->DenseRange(2, 6, 2);

static void BM_GradParamShift(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  const auto model = qnn::build_pqc(q, 1, 11);
  std::vector<qnn::Sample> batch = {make_sample(q, 3), make_sample(q, 4)};
  const auto noise = noisy();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        qnn::grad_parameter_shift(model, batch, noise, 1.0));
  }
}
BENCHMARK(BM_GradParamShift)->DenseRange(2, 4, 1);

static void BM_Fedavg(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<Eigen::VectorXd> params(8, Eigen::VectorXd(40));
  for (auto& p : params)
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = dist(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fed::fedavg(params));
  }
}
BENCHMARK(BM_Fedavg);

BENCHMARK_MAIN();
