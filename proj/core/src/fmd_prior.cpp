#include "fmd/fmd_prior.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "fmd/error.hpp"
#include "fmd/rng.hpp"

namespace fmd {

void validate_prior(const FmdPrior& prior) {
  validate_schedule(prior.sched);
  require(prior.layout.T == prior.sched.T, "invalid_argument",
          "prior: layout T does not match schedule T");
  require(static_cast<int>(prior.nets.size()) == prior.layout.F, "invalid_argument",
          "prior: expected " + std::to_string(prior.layout.F) + " nets, have " +
              std::to_string(prior.nets.size()));
  require(prior.phase >= 0 && prior.phase < 31, "invalid_argument", "prior: phase out of range");
  int frac_len = prior.layout.T / prior.layout.F;
  require(frac_len % prior.step_size() == 0, "invalid_argument",
          "prior: step_size " + std::to_string(prior.step_size()) +
              " does not divide fraction length " + std::to_string(frac_len));
  for (const auto& net : prior.nets) {
    require(net.config().total_steps == prior.sched.T, "invalid_argument",
            "prior: denoiser total_steps does not match schedule T");
  }
}

Matrix rollout_with(const NoiseSchedule& sched, const FractionLayout& layout, int k,
                    const FractionDenoiser& denoise_at, Matrix x, int t_start, long* calls) {
  require(t_start >= 1 && t_start <= sched.T, "invalid_argument",
          "rollout: t_start=" + std::to_string(t_start) + " out of [1," + std::to_string(sched.T) + "]");
  require(t_start % k == 0, "invalid_argument",
          "rollout: t_start=" + std::to_string(t_start) + " is not on the stride-" +
              std::to_string(k) + " grid");
  long n = 0;
  for (int t = t_start; t > 0; t -= k) {
    int f = fraction_of_step(t, layout);
    // fraction routing invariant: each net only ever sees its own interval
    require(t >= layout.end_of(f) && t <= layout.start_of(f), "internal",
            "rollout dispatched t outside its fraction");
    Matrix x0_hat = denoise_at(f, x, t);
    ++n;
    x = ddim_step(x, x0_hat, t, k, sched);
  }
  if (calls) *calls = n;
  return x;
}

Matrix rollout(const FmdPrior& prior, const Matrix& x_t, int t_start, long* calls) {
  return rollout_with(
      prior.sched, prior.layout, prior.step_size(),
      [&prior](int f, const Matrix& x, int t) { return denoise(prior.nets[f - 1], x, t); }, x_t,
      t_start, calls);
}

namespace {

void check_data(std::span<const Sample> data, const DenoiserConfig& dcfg) {
  require(!data.empty(), "invalid_argument", "training data is empty");
  for (const auto& s : data) {
    require(s.values.rows() == dcfg.rows && s.values.cols() == dcfg.cols, "shape_mismatch",
            "sample '" + s.id + "' has shape " + std::to_string(s.values.rows()) + "x" +
                std::to_string(s.values.cols()) + ", expected " + std::to_string(dcfg.rows) + "x" +
                std::to_string(dcfg.cols));
    require(s.values.all_finite(), "invalid_argument", "sample '" + s.id + "' has non-finite values");
  }
}

void run_jobs(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  int workers = std::min(jobs, count);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Trains `net` with Adam on batches produced by `make_batch(rng, batch_out)`.
// make_batch may report skipped items via its return value.
long train_net(DenoiserNet& net, const TrainConfig& cfg, int n_samples, Rng rng,
               const std::function<long(Rng&, std::vector<BatchItem>&)>& make_batch) {
  AdamState state(net.param_count());
  int steps_per_epoch = std::max(1, (n_samples + cfg.batch - 1) / cfg.batch);
  std::vector<BatchItem> batch;
  long skipped = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s) {
      batch.clear();
      skipped += make_batch(rng, batch);
      if (batch.empty()) continue;
      LossGrad lg = loss_and_grad(net, batch);
      adam_step(state, net.params(), lg.param_grad, cfg);
      canonicalize_f32(net.params());
    }
  }
  return skipped;
}

}  // namespace

FmdPrior train_fractions(std::span<const Sample> data, const TrainConfig& cfg,
                         const NoiseSchedule& sched, const FractionLayout& layout,
                         const DenoiserConfig& dcfg, uint64_t seed, int jobs) {
  require(layout.T == sched.T, "invalid_argument", "layout T does not match schedule T");
  DenoiserConfig net_cfg = dcfg;
  net_cfg.total_steps = sched.T;
  check_data(data, net_cfg);

  FmdPrior prior;
  prior.sched = sched;
  prior.layout = layout;
  prior.phase = 0;
  prior.nets.reserve(layout.F);
  for (int f = 1; f <= layout.F; ++f) {
    DenoiserConfig c = net_cfg;
    c.seed = mix_seed(seed, tag_hash("init-fraction") + f);
    prior.nets.emplace_back(c);
  }

  int n = static_cast<int>(data.size());
  int bsz = std::min<int>(cfg.batch, std::max(1, n));
  run_jobs(layout.F, jobs, [&](int fi) {
    int f = fi + 1;
    int t_lo = layout.end_of(f), t_hi = layout.start_of(f);
    Rng rng = Rng(seed).derive("train-fraction").derive(static_cast<uint64_t>(f));
    train_net(prior.nets[fi], cfg, n, rng, [&](Rng& r, std::vector<BatchItem>& batch) -> long {
      for (int b = 0; b < bsz; ++b) {
        const Sample& s = data[r.uniform_int(0, n - 1)];
        int t = r.uniform_int(t_lo, t_hi);
        Matrix eps = r.gaussian_matrix(net_cfg.rows, net_cfg.cols);
        batch.push_back({forward_diffuse(s.values, t, eps, sched), t, s.values});
      }
      return 0;
    });
  });
  return prior;
}

namespace {

DistillResult distill_impl(const FmdPrior& prior, std::span<const Sample> data,
                           const TrainConfig& cfg, int target_phase, uint64_t seed, int jobs) {
  validate_prior(prior);
  require(target_phase > prior.phase, "invalid_argument",
          "distill: target phase must exceed the current phase");
  const DenoiserConfig& dcfg = prior.nets.front().config();
  check_data(data, dcfg);

  int frac_len = prior.layout.T / prior.layout.F;
  int k_teacher = prior.step_size();
  int k_student = 1 << target_phase;
  require(frac_len % k_student == 0, "invalid_argument",
          "distill: student stride " + std::to_string(k_student) +
              " no longer divides the fraction length " + std::to_string(frac_len));
  int chain = k_student / k_teacher;  // teacher steps per student step

  DistillResult res;
  res.prior.sched = prior.sched;
  res.prior.layout = prior.layout;
  res.prior.phase = target_phase;
  res.prior.nets.reserve(prior.layout.F);
  for (const auto& net : prior.nets) res.prior.nets.push_back(clone_params(net));

  const NoiseSchedule& sched = prior.sched;
  int n = static_cast<int>(data.size());
  int bsz = std::min<int>(cfg.batch, std::max(1, n));
  int grid_per_fraction = frac_len / k_student;
  std::vector<long> skips(prior.layout.F, 0);

  run_jobs(prior.layout.F, jobs, [&](int fi) {
    int f = fi + 1;
    int t_top = prior.layout.start_of(f);
    Rng rng = Rng(seed).derive("distill-fraction").derive(
        mix_seed(static_cast<uint64_t>(target_phase), static_cast<uint64_t>(f)));
    skips[fi] = train_net(
        res.prior.nets[fi], cfg, n, rng, [&](Rng& r, std::vector<BatchItem>& batch) -> long {
          long skipped = 0;
          for (int b = 0; b < bsz; ++b) {
            const Sample& s = data[r.uniform_int(0, n - 1)];
            int t = t_top - k_student * r.uniform_int(0, grid_per_fraction - 1);
            Matrix eps = r.gaussian_matrix(dcfg.rows, dcfg.cols);
            Matrix x_t = forward_diffuse(s.values, t, eps, sched);

            // teacher chain from t down to t - k_student, routed by source step
            Matrix x_cur = x_t;
            int tt = t;
            for (int step = 0; step < chain; ++step) {
              int ft = fraction_of_step(tt, prior.layout);
              Matrix x0h = denoise(prior.nets[ft - 1], x_cur, tt);
              x_cur = ddim_step(x_cur, x0h, tt, k_teacher, sched);
              tt -= k_teacher;
            }

            // invert the landing sample back to a clean-data target
            double ratio = sched.sigma[t - k_student] / sched.sigma[t];
            double denom = sched.alpha[t - k_student] - ratio * sched.alpha[t];
            if (std::abs(denom) < 1e-12) {
              ++skipped;
              continue;
            }
            Matrix target(dcfg.rows, dcfg.cols);
            auto tv = target.flat();
            auto cv = x_cur.flat();
            auto xv = x_t.flat();
            for (size_t i = 0; i < tv.size(); ++i) tv[i] = (cv[i] - ratio * xv[i]) / denom;
            batch.push_back({std::move(x_t), t, std::move(target)});
          }
          return skipped;
        });
  });
  res.skipped_degenerate = std::accumulate(skips.begin(), skips.end(), 0L);
  return res;
}

}  // namespace

DistillResult distill_phase(const FmdPrior& prior, std::span<const Sample> data,
                            const TrainConfig& cfg, uint64_t seed, int jobs) {
  return distill_impl(prior, data, cfg, prior.phase + 1, seed, jobs);
}

DistillResult distill_to_phase(const FmdPrior& prior, std::span<const Sample> data,
                               const TrainConfig& cfg, int target_phase, uint64_t seed, int jobs) {
  return distill_impl(prior, data, cfg, target_phase, seed, jobs);
}

}  // namespace fmd
