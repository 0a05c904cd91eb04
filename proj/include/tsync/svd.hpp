// Licensed under the Apache License 2.0 (see LICENSE file).

#pragma once

#include <vector>

#include "tsync/matrix.hpp"

namespace tsync::linalg {

struct Svd {
  MatrixD u;                   // rows x k
  std::vector<double> sigma;   // k, descending
  MatrixD v;                   // cols x k
  int sweeps = 0;
};

// Thin SVD by one-sided (Hestenes) Jacobi rotations, k = min(rows, cols).
// Converges when every column pair is orthogonal to `tolerance` relative to
// the column norms. Throws NumericalError after `max_sweeps` sweeps
// (default 10 * min(rows, cols)).
Svd jacobi_svd(const MatrixD& a, double tolerance = 1e-10, int max_sweeps = 0);

}  // namespace tsync::linalg
