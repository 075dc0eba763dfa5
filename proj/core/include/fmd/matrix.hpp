#pragma once

#include <span>
#include <string>
#include <vector>

namespace fmd {

/// Dense row-major matrix of doubles. Region activations are rows,
/// timepoints are columns throughout the library.
class Matrix {
public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_ * cols_; }

  double& operator()(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::span<double> flat() { return v_; }
  std::span<const double> flat() const { return v_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Throws Error("shape_mismatch") unless shapes agree. `what` names the operation.
void check_same_shape(const Matrix& a, const Matrix& b, const std::string& what);

}  // namespace fmd
