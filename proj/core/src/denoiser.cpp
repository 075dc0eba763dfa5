#include "fmd/denoiser.hpp"

#include <cmath>
#include <cstring>

#include "fmd/error.hpp"
#include "fmd/rng.hpp"

namespace fmd {

DenoiserArch denoiser_arch_from_string(const std::string& s) {
  if (s == "dense") return DenoiserArch::Dense;
  if (s == "windowed-attention") return DenoiserArch::WindowedAttention;
  fail("invalid_argument", "unknown denoiser arch '" + s + "' (expected dense | windowed-attention)");
}

std::string to_string(DenoiserArch a) {
  return a == DenoiserArch::Dense ? "dense" : "windowed-attention";
}

void canonicalize_f32(std::span<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

std::vector<double> time_embedding(double tau, int dim) {
  require(dim >= 2 && dim % 2 == 0, "invalid_argument", "time_embed_dim must be even and >= 2");
  std::vector<double> e(dim);
  double freq = M_PI;
  for (int i = 0; i < dim / 2; ++i) {
    e[2 * i] = std::sin(freq * tau);
    e[2 * i + 1] = std::cos(freq * tau);
    freq *= 2.0;
  }
  return e;
}

namespace {

// silu(u) = u * logistic(u); smooth so finite-difference checks are clean.
inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double silu(double u) { return u * logistic(u); }
inline double silu_deriv(double u) {
  double s = logistic(u);
  return s * (1.0 + u * (1.0 - s));
}

void validate_config(const DenoiserConfig& cfg) {
  require(cfg.rows >= 1 && cfg.cols >= 1, "invalid_config", "denoiser input shape must be set");
  require(cfg.hidden_dim >= 1, "invalid_config", "hidden_dim must be >= 1");
  require(cfg.time_embed_dim >= 2 && cfg.time_embed_dim % 2 == 0, "invalid_config",
          "time_embed_dim must be even and >= 2");
  require(cfg.total_steps >= 1, "invalid_config", "total_steps must be set");
  if (cfg.arch == DenoiserArch::WindowedAttention) {
    require(cfg.window_len >= 1 && cfg.cols % cfg.window_len == 0, "invalid_config",
            "window_len must divide the number of timepoints");
  }
}

std::vector<ParamSegment> build_segments(const DenoiserConfig& cfg) {
  int m = cfg.rows * cfg.cols;
  int h = cfg.hidden_dim;
  std::vector<ParamSegment> segs;
  size_t off = 0;
  auto add = [&](const std::string& name, size_t size) {
    segs.push_back({name, off, size});
    off += size;
  };
  if (cfg.arch == DenoiserArch::Dense) {
    int n_in = m + cfg.time_embed_dim;
    add("w1", static_cast<size_t>(h) * n_in);
    add("b1", h);
    add("w2", static_cast<size_t>(h) * h);
    add("b2", h);
    add("out_w", static_cast<size_t>(m) * h);
    add("out_b", m);
  } else {
    int d = cfg.rows + cfg.time_embed_dim;
    add("wq", static_cast<size_t>(h) * d);
    add("bq", h);
    add("wk", static_cast<size_t>(h) * d);
    add("bk", h);
    add("wv", static_cast<size_t>(h) * d);
    add("bv", h);
    add("ff_w", static_cast<size_t>(h) * h);
    add("ff_b", h);
    add("out_w", static_cast<size_t>(cfg.rows) * h);
    add("out_b", cfg.rows);
  }
  return segs;
}

// fan dims per segment, for uniform(-a, a) with a = sqrt(6/(fan_in+fan_out)).
void init_params(const DenoiserConfig& cfg, const std::vector<ParamSegment>& segs,
                 std::vector<double>& p) {
  int m = cfg.rows * cfg.cols;
  int h = cfg.hidden_dim;
  Rng root(cfg.seed);
  for (const auto& seg : segs) {
    if (seg.name.find('b') != std::string::npos) continue;  // biases stay 0
    int fan_in = 0, fan_out = 0;
    if (cfg.arch == DenoiserArch::Dense) {
      int n_in = m + cfg.time_embed_dim;
      if (seg.name == "w1") fan_in = n_in, fan_out = h;
      else if (seg.name == "w2") fan_in = h, fan_out = h;
      else fan_in = h, fan_out = m;  // out_w
    } else {
      int d = cfg.rows + cfg.time_embed_dim;
      if (seg.name == "wq" || seg.name == "wk" || seg.name == "wv") fan_in = d, fan_out = h;
      else if (seg.name == "ff_w") fan_in = h, fan_out = h;
      else fan_in = h, fan_out = cfg.rows;  // out_w
    }
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    Rng r = root.derive(seg.name);
    for (size_t i = 0; i < seg.size; ++i) p[seg.offset + i] = r.uniform(-a, a);
  }
  canonicalize_f32(p);
}

struct SegView {
  const double* w1;
  const double* b1;
  const double* w2;
  const double* b2;
  const double* ow;
  const double* ob;
};

// --- dense architecture -----------------------------------------------------

struct DenseDims {
  int m, h, n_in;
};

DenseDims dense_dims(const DenoiserConfig& cfg) {
  DenseDims d;
  d.m = cfg.rows * cfg.cols;
  d.h = cfg.hidden_dim;
  d.n_in = d.m + cfg.time_embed_dim;
  return d;
}

struct DenseCache {
  std::vector<double> z, a1, h1, a2, h2, y;
};

void dense_forward(const DenoiserConfig& cfg, const std::vector<double>& p,
                   const std::vector<ParamSegment>& segs, const Matrix& x, int t,
                   DenseCache& c) {
  auto d = dense_dims(cfg);
  const double* w1 = p.data() + segs[0].offset;
  const double* b1 = p.data() + segs[1].offset;
  const double* w2 = p.data() + segs[2].offset;
  const double* b2 = p.data() + segs[3].offset;
  const double* ow = p.data() + segs[4].offset;
  const double* ob = p.data() + segs[5].offset;

  c.z.resize(d.n_in);
  std::memcpy(c.z.data(), x.data(), sizeof(double) * d.m);
  auto emb = time_embedding(static_cast<double>(t) / cfg.total_steps, cfg.time_embed_dim);
  std::memcpy(c.z.data() + d.m, emb.data(), sizeof(double) * emb.size());

  c.a1.assign(d.h, 0.0);
  c.h1.resize(d.h);
  for (int i = 0; i < d.h; ++i) {
    double acc = b1[i];
    const double* row = w1 + static_cast<size_t>(i) * d.n_in;
    for (int j = 0; j < d.n_in; ++j) acc += row[j] * c.z[j];
    c.a1[i] = acc;
    c.h1[i] = silu(acc);
  }
  c.a2.assign(d.h, 0.0);
  c.h2.resize(d.h);
  for (int i = 0; i < d.h; ++i) {
    double acc = b2[i];
    const double* row = w2 + static_cast<size_t>(i) * d.h;
    for (int j = 0; j < d.h; ++j) acc += row[j] * c.h1[j];
    c.a2[i] = acc;
    c.h2[i] = silu(acc);
  }
  c.y.resize(d.m);
  for (int i = 0; i < d.m; ++i) {
    double acc = ob[i];
    const double* row = ow + static_cast<size_t>(i) * d.h;
    for (int j = 0; j < d.h; ++j) acc += row[j] * c.h2[j];
    c.y[i] = acc;
  }
}

void dense_backward(const DenoiserConfig& cfg, const std::vector<double>& p,
                    const std::vector<ParamSegment>& segs, const DenseCache& c,
                    const std::vector<double>& dy, std::vector<double>& pg, Matrix* dx) {
  auto d = dense_dims(cfg);
  const double* w1 = p.data() + segs[0].offset;
  const double* w2 = p.data() + segs[2].offset;
  const double* ow = p.data() + segs[4].offset;
  double* g_w1 = pg.data() + segs[0].offset;
  double* g_b1 = pg.data() + segs[1].offset;
  double* g_w2 = pg.data() + segs[2].offset;
  double* g_b2 = pg.data() + segs[3].offset;
  double* g_ow = pg.data() + segs[4].offset;
  double* g_ob = pg.data() + segs[5].offset;

  std::vector<double> dh2(d.h, 0.0);
  for (int i = 0; i < d.m; ++i) {
    g_ob[i] += dy[i];
    double* grow = g_ow + static_cast<size_t>(i) * d.h;
    const double* row = ow + static_cast<size_t>(i) * d.h;
    for (int j = 0; j < d.h; ++j) {
      grow[j] += dy[i] * c.h2[j];
      dh2[j] += row[j] * dy[i];
    }
  }
  std::vector<double> da2(d.h);
  for (int i = 0; i < d.h; ++i) da2[i] = dh2[i] * silu_deriv(c.a2[i]);

  std::vector<double> dh1(d.h, 0.0);
  for (int i = 0; i < d.h; ++i) {
    g_b2[i] += da2[i];
    double* grow = g_w2 + static_cast<size_t>(i) * d.h;
    const double* row = w2 + static_cast<size_t>(i) * d.h;
    for (int j = 0; j < d.h; ++j) {
      grow[j] += da2[i] * c.h1[j];
      dh1[j] += row[j] * da2[i];
    }
  }
  std::vector<double> da1(d.h);
  for (int i = 0; i < d.h; ++i) da1[i] = dh1[i] * silu_deriv(c.a1[i]);

  std::vector<double> dz(d.n_in, 0.0);
  for (int i = 0; i < d.h; ++i) {
    g_b1[i] += da1[i];
    double* grow = g_w1 + static_cast<size_t>(i) * d.n_in;
    const double* row = w1 + static_cast<size_t>(i) * d.n_in;
    for (int j = 0; j < d.n_in; ++j) {
      grow[j] += da1[i] * c.z[j];
      dz[j] += row[j] * da1[i];
    }
  }
  if (dx) {
    for (int i = 0; i < d.m; ++i) dx->data()[i] += dz[i];
  }
}

// --- windowed self-attention architecture -----------------------------------

struct AttnCache {
  // per token: embedded input h, projections q/k/v, attention output o,
  // feed-forward pre-activation aff and activation cff.
  std::vector<double> h, q, k, v, o, aff, cff, attn, y;
  int L = 0, D = 0, H = 0, G = 0;
};

void attn_forward(const DenoiserConfig& cfg, const std::vector<double>& p,
                  const std::vector<ParamSegment>& segs, const Matrix& x, int t, AttnCache& c) {
  int R = cfg.rows, L = cfg.cols, H = cfg.hidden_dim, G = cfg.window_len;
  int D = R + cfg.time_embed_dim;
  c.L = L;
  c.D = D;
  c.H = H;
  c.G = G;
  const double* wq = p.data() + segs[0].offset;
  const double* bq = p.data() + segs[1].offset;
  const double* wk = p.data() + segs[2].offset;
  const double* bk = p.data() + segs[3].offset;
  const double* wv = p.data() + segs[4].offset;
  const double* bv = p.data() + segs[5].offset;
  const double* fw = p.data() + segs[6].offset;
  const double* fb = p.data() + segs[7].offset;
  const double* ow = p.data() + segs[8].offset;
  const double* ob = p.data() + segs[9].offset;

  auto emb = time_embedding(static_cast<double>(t) / cfg.total_steps, cfg.time_embed_dim);
  c.h.assign(static_cast<size_t>(L) * D, 0.0);
  for (int l = 0; l < L; ++l) {
    double* hl = c.h.data() + static_cast<size_t>(l) * D;
    for (int r = 0; r < R; ++r) hl[r] = x(r, l);
    for (int e = 0; e < cfg.time_embed_dim; ++e) hl[R + e] = emb[e];
  }

  auto project = [&](const double* w, const double* b, std::vector<double>& out) {
    out.assign(static_cast<size_t>(L) * H, 0.0);
    for (int l = 0; l < L; ++l) {
      const double* hl = c.h.data() + static_cast<size_t>(l) * D;
      double* ol = out.data() + static_cast<size_t>(l) * H;
      for (int i = 0; i < H; ++i) {
        double acc = b[i];
        const double* row = w + static_cast<size_t>(i) * D;
        for (int j = 0; j < D; ++j) acc += row[j] * hl[j];
        ol[i] = acc;
      }
    }
  };
  project(wq, bq, c.q);
  project(wk, bk, c.k);
  project(wv, bv, c.v);

  double scale = 1.0 / std::sqrt(static_cast<double>(H));
  int n_windows = L / G;
  c.attn.assign(static_cast<size_t>(n_windows) * G * G, 0.0);
  c.o.assign(static_cast<size_t>(L) * H, 0.0);
  for (int w = 0; w < n_windows; ++w) {
    int base = w * G;
    double* aw = c.attn.data() + static_cast<size_t>(w) * G * G;
    for (int i = 0; i < G; ++i) {
      const double* qi = c.q.data() + static_cast<size_t>(base + i) * H;
      double* arow = aw + static_cast<size_t>(i) * G;
      double mx = -1e300;
      for (int j = 0; j < G; ++j) {
        const double* kj = c.k.data() + static_cast<size_t>(base + j) * H;
        double s = 0.0;
        for (int m = 0; m < H; ++m) s += qi[m] * kj[m];
        arow[j] = s * scale;
        mx = std::max(mx, arow[j]);
      }
      double z = 0.0;
      for (int j = 0; j < G; ++j) {
        arow[j] = std::exp(arow[j] - mx);
        z += arow[j];
      }
      double* oi = c.o.data() + static_cast<size_t>(base + i) * H;
      for (int j = 0; j < G; ++j) {
        arow[j] /= z;
        const double* vj = c.v.data() + static_cast<size_t>(base + j) * H;
        for (int m = 0; m < H; ++m) oi[m] += arow[j] * vj[m];
      }
    }
  }

  c.aff.assign(static_cast<size_t>(L) * H, 0.0);
  c.cff.assign(static_cast<size_t>(L) * H, 0.0);
  c.y.assign(static_cast<size_t>(L) * R, 0.0);
  for (int l = 0; l < L; ++l) {
    const double* ol = c.o.data() + static_cast<size_t>(l) * H;
    double* al = c.aff.data() + static_cast<size_t>(l) * H;
    double* cl = c.cff.data() + static_cast<size_t>(l) * H;
    for (int i = 0; i < H; ++i) {
      double acc = fb[i];
      const double* row = fw + static_cast<size_t>(i) * H;
      for (int j = 0; j < H; ++j) acc += row[j] * ol[j];
      al[i] = acc;
      cl[i] = silu(acc);
    }
    double* yl = c.y.data() + static_cast<size_t>(l) * R;
    for (int r = 0; r < R; ++r) {
      double acc = ob[r];
      const double* row = ow + static_cast<size_t>(r) * H;
      for (int j = 0; j < H; ++j) acc += row[j] * cl[j];
      yl[r] = acc;
    }
  }
}

void attn_backward(const DenoiserConfig& cfg, const std::vector<double>& p,
                   const std::vector<ParamSegment>& segs, const AttnCache& c,
                   const std::vector<double>& dy_cols, std::vector<double>& pg, Matrix* dx) {
  int R = cfg.rows, L = cfg.cols, H = cfg.hidden_dim, G = cfg.window_len;
  int D = R + cfg.time_embed_dim;
  const double* wq = p.data() + segs[0].offset;
  const double* wk = p.data() + segs[2].offset;
  const double* wv = p.data() + segs[4].offset;
  const double* fw = p.data() + segs[6].offset;
  const double* ow = p.data() + segs[8].offset;
  double* g_wq = pg.data() + segs[0].offset;
  double* g_bq = pg.data() + segs[1].offset;
  double* g_wk = pg.data() + segs[2].offset;
  double* g_bk = pg.data() + segs[3].offset;
  double* g_wv = pg.data() + segs[4].offset;
  double* g_bv = pg.data() + segs[5].offset;
  double* g_fw = pg.data() + segs[6].offset;
  double* g_fb = pg.data() + segs[7].offset;
  double* g_ow = pg.data() + segs[8].offset;
  double* g_ob = pg.data() + segs[9].offset;

  std::vector<double> d_o(static_cast<size_t>(L) * H, 0.0);
  for (int l = 0; l < L; ++l) {
    const double* dyl = dy_cols.data() + static_cast<size_t>(l) * R;
    const double* cl = c.cff.data() + static_cast<size_t>(l) * H;
    const double* al = c.aff.data() + static_cast<size_t>(l) * H;
    const double* ol = c.o.data() + static_cast<size_t>(l) * H;
    std::vector<double> dcl(H, 0.0);
    for (int r = 0; r < R; ++r) {
      g_ob[r] += dyl[r];
      double* grow = g_ow + static_cast<size_t>(r) * H;
      const double* row = ow + static_cast<size_t>(r) * H;
      for (int j = 0; j < H; ++j) {
        grow[j] += dyl[r] * cl[j];
        dcl[j] += row[j] * dyl[r];
      }
    }
    double* dol = d_o.data() + static_cast<size_t>(l) * H;
    for (int i = 0; i < H; ++i) {
      double dff = dcl[i] * silu_deriv(al[i]);
      g_fb[i] += dff;
      double* grow = g_fw + static_cast<size_t>(i) * H;
      const double* row = fw + static_cast<size_t>(i) * H;
      for (int j = 0; j < H; ++j) {
        grow[j] += dff * ol[j];
        dol[j] += row[j] * dff;
      }
    }
  }

  double scale = 1.0 / std::sqrt(static_cast<double>(H));
  int n_windows = L / G;
  std::vector<double> d_q(static_cast<size_t>(L) * H, 0.0);
  std::vector<double> d_k(static_cast<size_t>(L) * H, 0.0);
  std::vector<double> d_v(static_cast<size_t>(L) * H, 0.0);
  for (int w = 0; w < n_windows; ++w) {
    int base = w * G;
    const double* aw = c.attn.data() + static_cast<size_t>(w) * G * G;
    for (int i = 0; i < G; ++i) {
      const double* arow = aw + static_cast<size_t>(i) * G;
      const double* doi = d_o.data() + static_cast<size_t>(base + i) * H;
      // da_ij = <do_i, v_j>; softmax backward to scores.
      std::vector<double> da(G, 0.0);
      double inner = 0.0;
      for (int j = 0; j < G; ++j) {
        const double* vj = c.v.data() + static_cast<size_t>(base + j) * H;
        double acc = 0.0;
        for (int m = 0; m < H; ++m) acc += doi[m] * vj[m];
        da[j] = acc;
        inner += arow[j] * acc;
        double* dvj = d_v.data() + static_cast<size_t>(base + j) * H;
        for (int m = 0; m < H; ++m) dvj[m] += arow[j] * doi[m];
      }
      const double* qi = c.q.data() + static_cast<size_t>(base + i) * H;
      double* dqi = d_q.data() + static_cast<size_t>(base + i) * H;
      for (int j = 0; j < G; ++j) {
        double ds = arow[j] * (da[j] - inner) * scale;
        const double* kj = c.k.data() + static_cast<size_t>(base + j) * H;
        double* dkj = d_k.data() + static_cast<size_t>(base + j) * H;
        for (int m = 0; m < H; ++m) {
          dqi[m] += ds * kj[m];
          dkj[m] += ds * qi[m];
        }
      }
    }
  }

  // project gradients back through q/k/v onto weights and the input.
  std::vector<double> dh(static_cast<size_t>(L) * D, 0.0);
  auto unproject = [&](const double* w, double* g_w, double* g_b, const std::vector<double>& dp) {
    for (int l = 0; l < L; ++l) {
      const double* hl = c.h.data() + static_cast<size_t>(l) * D;
      const double* dpl = dp.data() + static_cast<size_t>(l) * H;
      double* dhl = dh.data() + static_cast<size_t>(l) * D;
      for (int i = 0; i < H; ++i) {
        g_b[i] += dpl[i];
        double* grow = g_w + static_cast<size_t>(i) * D;
        const double* row = w + static_cast<size_t>(i) * D;
        for (int j = 0; j < D; ++j) {
          grow[j] += dpl[i] * hl[j];
          dhl[j] += row[j] * dpl[i];
        }
      }
    }
  };
  unproject(wq, g_wq, g_bq, d_q);
  unproject(wk, g_wk, g_bk, d_k);
  unproject(wv, g_wv, g_bv, d_v);

  if (dx) {
    for (int l = 0; l < L; ++l) {
      const double* dhl = dh.data() + static_cast<size_t>(l) * D;
      for (int r = 0; r < R; ++r) (*dx)(r, l) += dhl[r];
    }
  }
}

}  // namespace

DenoiserNet::DenoiserNet(const DenoiserConfig& cfg) : cfg_(cfg) {
  validate_config(cfg_);
  segments_ = build_segments(cfg_);
  params_.assign(denoiser_param_count(cfg_), 0.0);
  init_params(cfg_, segments_, params_);
}

DenoiserNet::DenoiserNet(const DenoiserConfig& cfg, std::vector<double> params) : cfg_(cfg) {
  validate_config(cfg_);
  segments_ = build_segments(cfg_);
  require(params.size() == denoiser_param_count(cfg_), "invalid_argument",
          "parameter vector size does not match architecture");
  params_ = std::move(params);
  for (double x : params_) {
    require(std::isfinite(x), "invalid_argument", "denoiser parameters must be finite");
  }
}

const ParamSegment& DenoiserNet::segment(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  fail("invalid_argument", "no parameter segment named '" + std::string(name) + "'");
}

size_t denoiser_param_count(const DenoiserConfig& cfg) {
  auto segs = build_segments(cfg);
  return segs.back().offset + segs.back().size;
}

Matrix denoise(const DenoiserNet& net, const Matrix& x_t, int t) {
  const auto& cfg = net.config();
  require(x_t.rows() == cfg.rows && x_t.cols() == cfg.cols, "shape_mismatch",
          "denoise: input shape does not match network config");
  require(x_t.all_finite(), "invalid_argument", "denoise: non-finite input");
  require(t >= 1 && t <= cfg.total_steps, "invalid_argument",
          "denoise: t=" + std::to_string(t) + " out of [1," + std::to_string(cfg.total_steps) + "]");
  Matrix out(cfg.rows, cfg.cols);
  if (cfg.arch == DenoiserArch::Dense) {
    DenseCache c;
    dense_forward(cfg, net.params(), net.segments(), x_t, t, c);
    std::memcpy(out.data(), c.y.data(), sizeof(double) * c.y.size());
  } else {
    AttnCache c;
    attn_forward(cfg, net.params(), net.segments(), x_t, t, c);
    for (int l = 0; l < cfg.cols; ++l) {
      for (int r = 0; r < cfg.rows; ++r) out(r, l) = c.y[static_cast<size_t>(l) * cfg.rows + r];
    }
  }
  return out;
}

LossGrad loss_and_grad(const DenoiserNet& net, std::span<const BatchItem> batch) {
  require(!batch.empty(), "invalid_argument", "loss_and_grad: empty batch");
  const auto& cfg = net.config();
  int m = cfg.rows * cfg.cols;
  LossGrad out;
  out.param_grad.assign(net.param_count(), 0.0);
  out.input_grads.reserve(batch.size());
  double norm = 1.0 / (static_cast<double>(m) * batch.size());
  for (const auto& item : batch) {
    require(item.x_t.rows() == cfg.rows && item.x_t.cols() == cfg.cols, "shape_mismatch",
            "loss_and_grad: batch item shape mismatch");
    check_same_shape(item.x_t, item.target, "loss_and_grad target");
    Matrix dx(cfg.rows, cfg.cols);
    if (cfg.arch == DenoiserArch::Dense) {
      DenseCache c;
      dense_forward(cfg, net.params(), net.segments(), item.x_t, item.t, c);
      std::vector<double> dy(m);
      const double* tgt = item.target.data();
      for (int i = 0; i < m; ++i) {
        double r = c.y[i] - tgt[i];
        out.loss += r * r * norm;
        dy[i] = 2.0 * r * norm;
      }
      dense_backward(cfg, net.params(), net.segments(), c, dy, out.param_grad, &dx);
    } else {
      AttnCache c;
      attn_forward(cfg, net.params(), net.segments(), item.x_t, item.t, c);
      std::vector<double> dy(static_cast<size_t>(cfg.cols) * cfg.rows, 0.0);
      for (int l = 0; l < cfg.cols; ++l) {
        for (int r = 0; r < cfg.rows; ++r) {
          double res = c.y[static_cast<size_t>(l) * cfg.rows + r] - item.target(r, l);
          out.loss += res * res * norm;
          dy[static_cast<size_t>(l) * cfg.rows + r] = 2.0 * res * norm;
        }
      }
      attn_backward(cfg, net.params(), net.segments(), c, dy, out.param_grad, &dx);
    }
    out.input_grads.push_back(std::move(dx));
  }
  return out;
}

DenoiserNet clone_params(const DenoiserNet& net) { return net; }

Matrix attention_weights(const DenoiserNet& net, const Matrix& x_t, int t) {
  const auto& cfg = net.config();
  require(cfg.arch == DenoiserArch::WindowedAttention, "invalid_argument",
          "attention_weights: not a windowed-attention network");
  require(x_t.rows() == cfg.rows && x_t.cols() == cfg.cols, "shape_mismatch",
          "attention_weights: input shape mismatch");
  AttnCache c;
  attn_forward(cfg, net.params(), net.segments(), x_t, t, c);
  Matrix out(cfg.cols, cfg.window_len);
  int n_windows = cfg.cols / cfg.window_len;
  for (int w = 0; w < n_windows; ++w) {
    for (int i = 0; i < cfg.window_len; ++i) {
      for (int j = 0; j < cfg.window_len; ++j) {
        out(w * cfg.window_len + i, j) =
            c.attn[static_cast<size_t>(w) * cfg.window_len * cfg.window_len +
                   static_cast<size_t>(i) * cfg.window_len + j];
      }
    }
  }
  return out;
}

}  // namespace fmd
