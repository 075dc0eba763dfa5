#pragma once

#include <span>
#include <vector>

#include "fmd/matrix.hpp"

namespace fmd {

/// Pearson correlation of each region pair over timepoints (R x R, symmetric,
/// unit diagonal). A zero-variance region yields 0 off-diagonal correlations;
/// when `zero_variance_regions` is given it receives the count.
Matrix fc_matrix(const Matrix& x, int* zero_variance_regions = nullptr);

/// Number of upper-triangle entries (i < j) for R regions.
int fc_feature_count(int regions);

/// Flattened upper triangle of fc_matrix(x), row-major over pairs (i < j).
std::vector<double> fc_upper(const Matrix& x);

/// Vector-Jacobian product of fc_upper: given a cotangent per upper-triangle
/// feature, returns d(sum_f g_f * fc_f)/dx as an R x L matrix. Pairs touching
/// a zero-variance region contribute nothing.
Matrix fc_upper_vjp(const Matrix& x, std::span<const double> gfeat);

}  // namespace fmd
