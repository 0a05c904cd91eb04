// Licensed under the Apache License 2.0 (see LICENSE file).

#pragma once

#include <cstdint>
#include <string>

#include "tsync/embedder.hpp"
#include "tsync/matrix.hpp"

namespace tsync::costmat {

// Pairwise descriptor distances between two strided sequences. Rows index
// X, columns index Y.
struct CostMatrix {
  MatrixD values;
  std::uint32_t stride = 1;
  bool decorrelated = false;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
  double operator()(std::size_t r, std::size_t c) const { return values(r, c); }
};

CostMatrix build_cost_matrix(const embed::DescriptorSeq& dx, const embed::DescriptorSeq& dy);

// C minus its best rank-r approximation. Entries may become negative.
CostMatrix decorrelate(const CostMatrix& c, std::size_t rank);

double frobenius_norm(const MatrixD& m);

void write_matrix(const CostMatrix& c, const std::string& path);
CostMatrix read_matrix(const std::string& path);

// Binary PGM (P5), values mapped affinely from [min, max] to [0, 255].
void write_pgm(const CostMatrix& c, const std::string& path);

}  // namespace tsync::costmat
