// Serial reference vs OpenMP kernels on training- and sweep-sized inputs.
#include <benchmark/benchmark.h>

#include "cpmtl/evaluation.hpp"
#include "cpmtl/hypergen.hpp"
#include "cpmtl/kernels.hpp"
#include "cpmtl/trainer.hpp"

namespace {

using namespace cpmtl;

std::vector<Vector> random_vectors(std::size_t count, std::size_t dim) {
  Rng rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out(count, Vector(dim));
  for (auto& v : out)
    for (double& x : v) x = normal(rng);
  return out;
}

kernels::VectorViews as_views(const std::vector<Vector>& vs) {
  kernels::VectorViews v;
  for (const auto& x : vs) v.emplace_back(x);
  return v;
}

template <bool Parallel>
void BM_Gram(benchmark::State& state) {
  const auto vs = random_vectors(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto views = as_views(vs);
  for (auto _ : state) {
    DenseMatrix g = Parallel ? kernels::gram_matrix(views) : kernels::serial::gram_matrix(views);
    benchmark::DoNotOptimize(g.data.data());
  }
}

template <bool Parallel>
void BM_Combine(benchmark::State& state) {
  const auto vs = random_vectors(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto views = as_views(vs);
  Vector w(vs.size(), 1.0 / static_cast<double>(vs.size()));
  Vector out(vs[0].size());
  for (auto _ : state) {
    if (Parallel)
      kernels::combine(w, views, out);
    else
      kernels::serial::combine(w, views, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Sweep(benchmark::State& state) {
  RegressionProblem problem;
  TrainingConfig cfg;
  cfg.mode = TrainMode::Linear;
  const TrainerState s = init_state(cfg, problem);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto front = Parallel ? sweep_front(problem, s.spec, s.params, NormMode::Simplex, n)
                          : serial::sweep_front(problem, s.spec, s.params, NormMode::Simplex, n);
    benchmark::DoNotOptimize(front.data());
  }
}

// Regression generator: 5 vectors (2 losses + 3 constraints) of ~25k entries.
BENCHMARK(BM_Gram<false>)->Args({5, 25000})->Args({12, 25000});
BENCHMARK(BM_Gram<true>)->Args({5, 25000})->Args({12, 25000});
BENCHMARK(BM_Combine<false>)->Args({5, 25000})->Args({12, 250000});
BENCHMARK(BM_Combine<true>)->Args({5, 25000})->Args({12, 250000});
BENCHMARK(BM_Sweep<false>)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Sweep<true>)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
