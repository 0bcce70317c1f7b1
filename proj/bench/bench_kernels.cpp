// Serial reference vs OpenMP kernels, and a Parle round in both modes.
#include <benchmark/benchmark.h>

#include <memory>
#include <numeric>
#include <vector>

#include "parle/kernels.hpp"
#include "parle/optimizers.hpp"

using namespace parle;

namespace {

std::vector<double> filled(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <kernels::Backend backend>
void BM_DenseForward(benchmark::State& state) {
  const kernels::DenseDims d{static_cast<std::size_t>(state.range(0)), 784, 64};
  Rng rng(1);
  const auto x = filled(d.rows * d.in, rng), w = filled(d.out * d.in, rng), b = filled(d.out, rng);
  std::vector<double> y(d.rows * d.out);
  for (auto _ : state) {
    kernels::dense_forward(backend, d, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.rows * d.in * d.out));
}

template <kernels::Backend backend>
void BM_DenseBackward(benchmark::State& state) {
  const kernels::DenseDims d{static_cast<std::size_t>(state.range(0)), 784, 64};
  Rng rng(2);
  const auto x = filled(d.rows * d.in, rng), w = filled(d.out * d.in, rng), dy = filled(d.rows * d.out, rng);
  std::vector<double> dw(d.out * d.in), db(d.out), dx(d.rows * d.in);
  for (auto _ : state) {
    kernels::dense_backward_params(backend, d, x, dy, dw, db);
    kernels::dense_backward_input(backend, d, dy, w, dx);
    benchmark::DoNotOptimize(dw.data());
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * d.rows * d.in * d.out));
}

template <ExecMode mode>
void BM_ParleRound(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(3);
  auto data = std::make_shared<Dataset>(make_blobs(10, 100, 64, 0.5, rng));
  const MlpOracle m({64, 64, 10}, data, 1e-4);
  std::vector<std::size_t> all(data->size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  HyperParams hp;
  hp.n_replicas = n;
  hp.B = 10;
  const FlatParams x0 = m.init_params(rng);
  auto replicas = make_replicas(std::vector<FlatParams>(n, x0),
                                std::vector<std::vector<std::size_t>>(n, all), 64, 4);
  ServerState server{x0, 0};
  CommLedger ledger;
  for (auto _ : state) {
    parle_round(m, replicas, server, hp, ledger, mode);
    benchmark::DoNotOptimize(server.x.values().data());
  }
}

}  // namespace

BENCHMARK(BM_DenseForward<kernels::Backend::serial>)->Arg(64)->Arg(256);
BENCHMARK(BM_DenseForward<kernels::Backend::omp>)->Arg(64)->Arg(256);
BENCHMARK(BM_DenseBackward<kernels::Backend::serial>)->Arg(64)->Arg(256);
BENCHMARK(BM_DenseBackward<kernels::Backend::omp>)->Arg(64)->Arg(256);
BENCHMARK(BM_ParleRound<ExecMode::sequential>)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ParleRound<ExecMode::parallel>)->Arg(3)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
