#include <benchmark/benchmark.h>

#include "fmd/metrics.hpp"
#include "fmd/rng.hpp"

using namespace fmd;

namespace {

void BM_FcMatrix(benchmark::State& state) {
  Matrix x = Rng(1).gaussian_matrix(static_cast<int>(state.range(0)), 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fc_matrix(x));
  }
}
BENCHMARK(BM_FcMatrix)->Arg(8)->Arg(64);

void BM_FrechetFull(benchmark::State& state) {
  Rng rng(2);
  int d = static_cast<int>(state.range(0));
  std::vector<std::vector<double>> a, b;
  for (int i = 0; i < 128; ++i) {
    std::vector<double> va(d), vb(d);
    for (double& x : va) x = rng.gaussian();
    for (double& x : vb) x = rng.gaussian() + 0.2;
    a.push_back(va);
    b.push_back(vb);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(frechet_distance(a, b, CovMode::Full));
  }
}
BENCHMARK(BM_FrechetFull)->Arg(28)->Unit(benchmark::kMicrosecond);

void BM_Wasserstein(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> a(static_cast<size_t>(state.range(0))), b(a.size());
  for (double& x : a) x = rng.gaussian();
  for (double& x : b) x = rng.gaussian();
  for (auto _ : state) {
    benchmark::DoNotOptimize(wasserstein_1d(a, b));
  }
}
BENCHMARK(BM_Wasserstein)->Arg(1024)->Arg(16384);

void BM_Sparsity(benchmark::State& state) {
  Rng rng(4);
  Matrix x = rng.gaussian_matrix(8, 64);
  Matrix xc = rng.gaussian_matrix(8, 64);
  std::vector<double> sigma(512, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sparsity(x, xc, sigma));
  }
}
BENCHMARK(BM_Sparsity);

}  // namespace
