// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/costmat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tsync/binary_io.hpp"
#include "tsync/errors.hpp"
#include "tsync/svd.hpp"

namespace tsync::costmat {

CostMatrix build_cost_matrix(const embed::DescriptorSeq& dx, const embed::DescriptorSeq& dy) {
  if (dx.size() == 0 || dy.size() == 0) throw ArgumentError("cost matrix of an empty sequence");
  if (dx.dim() != dy.dim()) throw ArgumentError("descriptor dimensions differ");
  if (dx.stride != dy.stride) throw ArgumentError("descriptor strides differ");
  CostMatrix c{MatrixD(dx.size(), dy.size()), dx.stride, false};
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const auto xi = dx.values.row(i);
    for (std::size_t j = 0; j < dy.size(); ++j) c.values(i, j) = embed::distance(xi, dy.values.row(j));
  }
  return c;
}

CostMatrix decorrelate(const CostMatrix& c, std::size_t rank) {
  if (c.decorrelated) throw ArgumentError("matrix is already decorrelated");
  if (rank > std::min(c.rows(), c.cols()))
    throw ArgumentError("decorrelation rank " + std::to_string(rank) + " exceeds min(rows, cols)");
  CostMatrix out = c;
  out.decorrelated = true;
  if (rank == 0) return out;

  const auto svd = linalg::jacobi_svd(c.values);
  for (std::size_t k = 0; k < rank; ++k) {
    const double s = svd.sigma[k];
    if (s == 0.0) break;
    for (std::size_t i = 0; i < c.rows(); ++i) {
      const double us = svd.u(i, k) * s;
      auto row = out.values.row(i);
      for (std::size_t j = 0; j < c.cols(); ++j) row[j] -= us * svd.v(j, k);
    }
  }
  return out;
}

double frobenius_norm(const MatrixD& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

void write_matrix(const CostMatrix& c, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("TSCM");
  w.u32(static_cast<std::uint32_t>(c.rows()));
  w.u32(static_cast<std::uint32_t>(c.cols()));
  w.u32(c.stride);
  w.u8(c.decorrelated ? 1 : 0);
  for (double v : c.values.data()) w.f32(static_cast<float>(v));
  w.finish();
}

CostMatrix read_matrix(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("TSCM");
  const std::uint32_t rows = r.u32(), cols = r.u32(), stride = r.u32();
  const std::uint8_t flag = r.u8();
  if (rows == 0 || cols == 0 || stride == 0 || flag > 1) r.fail("bad matrix header");
  CostMatrix c{MatrixD(rows, cols), stride, flag == 1};
  for (double& v : c.values.data()) {
    v = r.f32();
    if (!std::isfinite(v)) r.fail("non-finite matrix entry");
  }
  r.expect_eof();
  return c;
}

void write_pgm(const CostMatrix& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  const auto [lo_it, hi_it] = std::minmax_element(c.values.data().begin(), c.values.data().end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  out << "P5\n" << c.cols() << " " << c.rows() << "\n255\n";
  for (double v : c.values.data()) {
    const double t = span > 0.0 ? (v - lo) / span : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  if (!out) throw DataError("write failed on '" + path + "'");
}

}  // namespace tsync::costmat
