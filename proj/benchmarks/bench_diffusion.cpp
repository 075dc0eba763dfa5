#include <benchmark/benchmark.h>

#include "fmd/counterfactual.hpp"
#include "fmd/fmd_prior.hpp"
#include "fmd/rng.hpp"
#include "fmd/schedule.hpp"

using namespace fmd;

namespace {

FmdPrior make_prior(int T, int F, int phase) {
  FmdPrior p;
  p.sched = build_schedule(T, ScheduleKind::Cosine);
  p.layout = FractionLayout::uniform(T, F);
  p.phase = phase;
  for (int f = 1; f <= F; ++f) {
    DenoiserConfig cfg;
    cfg.rows = 8;
    cfg.cols = 64;
    cfg.hidden_dim = 128;
    cfg.time_embed_dim = 16;
    cfg.total_steps = T;
    cfg.seed = f;
    p.nets.emplace_back(cfg);
  }
  return p;
}

void BM_BuildSchedule(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_schedule(static_cast<int>(state.range(0)), ScheduleKind::Cosine));
  }
}
BENCHMARK(BM_BuildSchedule)->Arg(64)->Arg(1024);

void BM_ForwardDiffuse(benchmark::State& state) {
  NoiseSchedule s = build_schedule(64, ScheduleKind::Cosine);
  Rng rng(1);
  Matrix x0 = rng.gaussian_matrix(8, 64);
  Matrix eps = rng.gaussian_matrix(8, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_diffuse(x0, 32, eps, s));
  }
}
BENCHMARK(BM_ForwardDiffuse);

void BM_DdimStep(benchmark::State& state) {
  NoiseSchedule s = build_schedule(64, ScheduleKind::Cosine);
  Rng rng(2);
  Matrix xt = rng.gaussian_matrix(8, 64);
  Matrix x0h = rng.gaussian_matrix(8, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ddim_step(xt, x0h, 32, 8, s));
  }
}
BENCHMARK(BM_DdimStep);

void BM_DenoiserForward(benchmark::State& state) {
  DenoiserConfig cfg;
  cfg.rows = 8;
  cfg.cols = 64;
  cfg.hidden_dim = 128;
  cfg.time_embed_dim = 16;
  cfg.total_steps = 64;
  cfg.arch = state.range(0) == 0 ? DenoiserArch::Dense : DenoiserArch::WindowedAttention;
  cfg.window_len = 8;
  DenoiserNet net(cfg);
  Matrix x = Rng(3).gaussian_matrix(8, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(denoise(net, x, 32));
  }
}
BENCHMARK(BM_DenoiserForward)->Arg(0)->Arg(1);

void BM_Rollout(benchmark::State& state) {
  FmdPrior prior = make_prior(64, 4, static_cast<int>(state.range(0)));
  Matrix noise = Rng(4).gaussian_matrix(8, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rollout(prior, noise, 64));
  }
}
BENCHMARK(BM_Rollout)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  FmdPrior prior = make_prior(64, 4, 3);
  ClassifierConfig ccfg;
  ccfg.classes = 2;
  ccfg.rows = 8;
  ccfg.cols = 64;
  Classifier clf(ccfg);
  Rng rng(5);
  for (double& p : clf.params()) p = 0.3 * rng.gaussian();
  Sample s;
  s.values = rng.gaussian_matrix(8, 64);
  GuidanceConfig g;
  g.target = 1 - clf.predict(s.values);
  g.delta_t = 32;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate(prior, clf, s, g));
  }
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

}  // namespace
