#include "fmd/fc.hpp"

#include <cmath>

#include "fmd/error.hpp"

namespace fmd {

namespace {

struct CenteredRows {
  Matrix u;                  // centered rows
  std::vector<double> norm;  // ||u_i||, 0 for constant rows
};

CenteredRows center_rows(const Matrix& x) {
  int R = x.rows(), L = x.cols();
  require(L >= 2, "invalid_argument", "fc_matrix needs at least 2 timepoints");
  CenteredRows c{Matrix(R, L), std::vector<double>(R, 0.0)};
  for (int i = 0; i < R; ++i) {
    double mean = 0.0;
    for (int l = 0; l < L; ++l) mean += x(i, l);
    mean /= L;
    double ss = 0.0;
    for (int l = 0; l < L; ++l) {
      double d = x(i, l) - mean;
      c.u(i, l) = d;
      ss += d * d;
    }
    // constant rows leave sub-epsilon residues after centering; treat them
    // as zero-variance rather than correlating roundoff noise
    double floor = 1e-12 * std::max(1.0, std::abs(mean));
    c.norm[i] = std::sqrt(ss / L) <= floor ? 0.0 : std::sqrt(ss);
  }
  return c;
}

}  // namespace

Matrix fc_matrix(const Matrix& x, int* zero_variance_regions) {
  auto c = center_rows(x);
  int R = x.rows(), L = x.cols();
  if (zero_variance_regions) {
    int n = 0;
    for (double v : c.norm) n += (v == 0.0);
    *zero_variance_regions = n;
  }
  Matrix fc(R, R);
  for (int i = 0; i < R; ++i) {
    fc(i, i) = 1.0;
    for (int j = i + 1; j < R; ++j) {
      double v = 0.0;
      if (c.norm[i] > 0.0 && c.norm[j] > 0.0) {
        double dot = 0.0;
        for (int l = 0; l < L; ++l) dot += c.u(i, l) * c.u(j, l);
        v = dot / (c.norm[i] * c.norm[j]);
      }
      fc(i, j) = v;
      fc(j, i) = v;
    }
  }
  return fc;
}

int fc_feature_count(int regions) { return regions * (regions - 1) / 2; }

std::vector<double> fc_upper(const Matrix& x) {
  Matrix fc = fc_matrix(x);
  int R = x.rows();
  std::vector<double> out;
  out.reserve(fc_feature_count(R));
  for (int i = 0; i < R; ++i) {
    for (int j = i + 1; j < R; ++j) out.push_back(fc(i, j));
  }
  return out;
}

Matrix fc_upper_vjp(const Matrix& x, std::span<const double> gfeat) {
  int R = x.rows(), L = x.cols();
  require(static_cast<int>(gfeat.size()) == fc_feature_count(R), "shape_mismatch",
          "fc_upper_vjp: cotangent length does not match feature count");
  auto c = center_rows(x);
  Matrix dx(R, L);
  int f = 0;
  for (int i = 0; i < R; ++i) {
    for (int j = i + 1; j < R; ++j, ++f) {
      double g = gfeat[f];
      if (g == 0.0 || c.norm[i] == 0.0 || c.norm[j] == 0.0) continue;
      double dot = 0.0;
      for (int l = 0; l < L; ++l) dot += c.u(i, l) * c.u(j, l);
      double ni = c.norm[i], nj = c.norm[j];
      double corr = dot / (ni * nj);
      // d corr / d u_i = v/(|u||v|) - corr * u/|u|^2; both terms are already
      // mean-free, so the centering projector is a no-op here.
      double inv_ij = 1.0 / (ni * nj);
      double ci = corr / (ni * ni);
      double cj = corr / (nj * nj);
      for (int l = 0; l < L; ++l) {
        dx(i, l) += g * (c.u(j, l) * inv_ij - ci * c.u(i, l));
        dx(j, l) += g * (c.u(i, l) * inv_ij - cj * c.u(j, l));
      }
    }
  }
  return dx;
}

}  // namespace fmd
