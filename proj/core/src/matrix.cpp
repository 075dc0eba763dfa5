#include "fmd/matrix.hpp"

#include <cmath>
#include <cstdlib>

#include "fmd/error.hpp"

namespace fmd {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
  require(rows >= 0 && cols >= 0, "invalid_argument", "matrix dimensions must be non-negative");
}

bool Matrix::all_finite() const {
  for (double x : v_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  check_same_shape(*this, o, "matrix add");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  check_same_shape(*this, o, "matrix subtract");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : v_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto fa = a.flat();
  auto fb = b.flat();
  for (size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
  return m;
}

void check_same_shape(const Matrix& a, const Matrix& b, const std::string& what) {
  if (!a.same_shape(b)) {
    fail("shape_mismatch", what + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                               " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace fmd
