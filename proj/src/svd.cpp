// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsync/errors.hpp"

namespace tsync::linalg {
namespace {

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

}  // namespace

Svd jacobi_svd(const MatrixD& input, double tolerance, int max_sweeps) {
  if (input.rows() == 0 || input.cols() == 0) throw ArgumentError("svd of an empty matrix");
  const bool transposed = input.rows() < input.cols();
  const MatrixD work_src = transposed ? input.transposed() : input;
  const std::size_t m = work_src.rows(), n = work_src.cols();
  if (max_sweeps <= 0) max_sweeps = 10 * static_cast<int>(n);

  // Column-major working copies.
  std::vector<std::vector<double>> cols(n, std::vector<double>(m));
  std::vector<std::vector<double>> vcols(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) cols[j][i] = work_src(i, j);
    vcols[j][j] = 1.0;
  }

  // Columns this small relative to the whole matrix only carry rounding noise.
  double total = 0.0;
  for (const auto& c : cols) total += dot(c, c);
  const double negligible = 1e-28 * total;

  int sweep = 0;
  bool converged = false;
  while (sweep < max_sweeps) {
    ++sweep;
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double alpha = dot(cols[i], cols[i]);
        const double beta = dot(cols[j], cols[j]);
        const double gamma = dot(cols[i], cols[j]);
        const double scale = std::sqrt(alpha * beta);
        if (alpha <= negligible || beta <= negligible || std::abs(gamma) <= tolerance * scale) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        auto rotate = [c, s](std::vector<double>& x, std::vector<double>& y) {
          for (std::size_t k = 0; k < x.size(); ++k) {
            const double xi = x[k], yi = y[k];
            x[k] = c * xi - s * yi;
            y[k] = s * xi + c * yi;
          }
        };
        rotate(cols[i], cols[j]);
        rotate(vcols[i], vcols[j]);
      }
    }
    if (!rotated) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NumericalError("jacobi svd did not converge after " + std::to_string(sweep) + " sweeps");

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(cols[j], cols[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  // Left vectors span the long side of the working matrix.
  MatrixD left(m, n, 0.0), right(n, n, 0.0);
  Svd out;
  out.sweeps = sweep;
  out.sigma.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = sigma[j];
    if (sigma[j] > 0.0)
      for (std::size_t i = 0; i < m; ++i) left(i, k) = cols[j][i] / sigma[j];
    for (std::size_t i = 0; i < n; ++i) right(i, k) = vcols[j][i];
  }
  if (transposed) {
    out.u = std::move(right);
    out.v = std::move(left);
  } else {
    out.u = std::move(left);
    out.v = std::move(right);
  }
  return out;
}

}  // namespace tsync::linalg
