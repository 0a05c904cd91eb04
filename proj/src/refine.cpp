// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/refine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>

#include "tsync/csv.hpp"
#include "tsync/errors.hpp"
#include "tsync/parallel.hpp"

namespace tsync::refine {
namespace {

constexpr const char* kAlignHeader = "t,frame_x,frame_y,smooth_x,smooth_y";

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<double, 4>;  // row-major

Mat2 mul(const Mat2& a, const Mat2& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
          a[2] * b[1] + a[3] * b[3]};
}
Mat2 transpose(const Mat2& a) { return {a[0], a[2], a[1], a[3]}; }
Mat2 inverse(const Mat2& a) {
  const double det = a[0] * a[3] - a[1] * a[2];
  return {a[3] / det, -a[1] / det, -a[2] / det, a[0] / det};
}
Vec2 mat_vec(const Mat2& a, const Vec2& v) { return {a[0] * v[0] + a[1] * v[1], a[2] * v[0] + a[3] * v[1]}; }

// One chunk: the box between the chunk's corner frames grown by `halo` on
// every side, solved between the grown corners. Distances are computed only
// within stride + halo of the coarse tour; the rest of the box is impassable.
// Only rows of the chunk itself are kept, so the forced corners fall into
// the discarded halo.
std::vector<FramePair> refine_chunk(std::span<const tour::TourPair> nodes, bool opens_segment, bool closes_segment,
                                    const embed::DescriptorSeq& dx, const embed::DescriptorSeq& dy,
                                    std::uint32_t stride, std::size_t halo) {
  const std::size_t x0 = nodes.front().row * stride, y0 = nodes.front().col * stride;
  const std::size_t x1 = nodes.back().row * stride, y1 = nodes.back().col * stride;
  const std::size_t bx0 = x0 - std::min(x0, halo), by0 = y0 - std::min(y0, halo);
  const std::size_t bx1 = std::min(dx.size() - 1, x1 + halo), by1 = std::min(dy.size() - 1, y1 + halo);
  MatrixD sub(bx1 - bx0 + 1, by1 - by0 + 1, std::numeric_limits<double>::infinity());
  // Consecutive nodes may be several coarse steps apart where implausible
  // nodes were dropped; the band covers the box spanned by each such step.
  const std::size_t reach = stride + halo;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& p = nodes[k];
    const bool gap = k + 1 < nodes.size() && (nodes[k + 1].row > p.row + 1 || nodes[k + 1].col > p.col + 1);
    const auto& q = gap ? nodes[k + 1] : p;
    const std::size_t px = p.row * stride, py = p.col * stride, qx = q.row * stride, qy = q.col * stride;
    const std::size_t ilo = std::max(bx0, px - std::min(px, reach)), ihi = std::min(bx1, qx + reach);
    const std::size_t jlo = std::max(by0, py - std::min(py, reach)), jhi = std::min(by1, qy + reach);
    for (std::size_t i = ilo; i <= ihi; ++i) {
      const auto xi = dx.values.row(i);
      for (std::size_t j = jlo; j <= jhi; ++j)
        if (std::isinf(sub(i - bx0, j - by0))) sub(i - bx0, j - by0) = embed::distance(xi, dy.values.row(j));
    }
  }
  const auto path = tour::dijkstra_grid(sub, {0, 0}, {sub.rows() - 1, sub.cols() - 1});
  std::vector<FramePair> kept;
  for (const auto& node : path.nodes) {
    const std::size_t x = bx0 + node.row;
    if (x >= x0 && (x < x1 || (closes_segment && x == x1))) kept.emplace_back(x, by0 + node.col);
  }
  // At the ends of a segment there is no halo beyond the first and last
  // coarse node to absorb a misplaced corner; a straight run there is the
  // path crawling along the box edge, so keep only its inner end.
  auto straight = [](const FramePair& p, const FramePair& q) { return p.first == q.first || p.second == q.second; };
  std::size_t lo = 0, hi = kept.size();
  if (opens_segment)
    while (hi - lo > 1 && straight(kept[lo], kept[lo + 1])) ++lo;
  if (closes_segment)
    while (hi - lo > 1 && straight(kept[hi - 1], kept[hi - 2])) --hi;
  return {kept.begin() + static_cast<std::ptrdiff_t>(lo), kept.begin() + static_cast<std::ptrdiff_t>(hi)};
}

}  // namespace

std::vector<FramePair> refine_tour(const tour::MatchingTour& coarse, const embed::DescriptorSeq& dx_full,
                                   const embed::DescriptorSeq& dy_full, std::size_t chunk) {
  if (coarse.empty()) throw ArgumentError("cannot refine an empty tour");
  if (chunk < 1) throw ArgumentError("chunk size must be >= 1");
  if (dx_full.stride != 1 || dy_full.stride != 1) throw ArgumentError("refinement needs stride-1 descriptors");
  const std::uint32_t s = coarse.stride;
  for (const auto& p : coarse.pairs)
    if (p.row * s >= dx_full.size() || p.col * s >= dy_full.size())
      throw DataError("coarse node (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                      ") maps outside the full-resolution descriptors");

  // Chunks as (first, last) coarse indices; a single-node segment is its own chunk.
  struct Chunk {
    std::size_t first, last;
    bool opens_segment, closes_segment;
  };
  std::vector<Chunk> chunks;
  std::size_t begin = 0;
  while (begin < coarse.pairs.size()) {
    std::size_t end = begin;
    while (end + 1 < coarse.pairs.size() && coarse.pairs[end + 1].segment == coarse.pairs[begin].segment) ++end;
    if (begin == end) chunks.push_back({begin, end, true, true});
    for (std::size_t a = begin; a < end; a += chunk) {
      const std::size_t b = std::min(a + chunk, end);
      chunks.push_back({a, b, a == begin, b == end});
    }
    begin = end + 1;
  }

  std::vector<std::vector<FramePair>> pieces(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t k) {
    const auto& c = chunks[k];
    const auto& a = coarse.pairs[c.first];
    if (c.first == c.last)
      pieces[k] = {{a.row * s, a.col * s}};
    else
      pieces[k] = refine_chunk(std::span(coarse.pairs).subspan(c.first, c.last - c.first + 1), c.opens_segment,
                               c.closes_segment, dx_full, dy_full, s, s);
  });

  // Neighbouring chunks were solved independently; drop the rare seam node
  // that would step backwards.
  std::vector<FramePair> out;
  for (const auto& piece : pieces)
    for (const auto& p : piece)
      if (out.empty() || (p.first >= out.back().first && p.second >= out.back().second && p != out.back()))
        out.push_back(p);
  return out;
}

std::vector<double> rts_smooth(const std::vector<double>& z, const SmoothConfig& cfg) {
  const std::size_t n = z.size();
  if (n <= 1) return z;
  const double q = cfg.process_variance, r = cfg.measurement_variance;
  const Mat2 F{1.0, 1.0, 0.0, 1.0};
  const Mat2 Q{q / 3.0, q / 2.0, q / 2.0, q};

  std::vector<Vec2> xp(n), xf(n);
  std::vector<Mat2> pp(n), pf(n);
  // Two-point initialisation: exact for any straight line.
  xp[0] = {z[0], z[1] - z[0]};
  pp[0] = {r, r, r, 2.0 * r};
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      xp[t] = mat_vec(F, xf[t - 1]);
      const Mat2 fp = mul(mul(F, pf[t - 1]), transpose(F));
      pp[t] = {fp[0] + Q[0], fp[1] + Q[1], fp[2] + Q[2], fp[3] + Q[3]};
    }
    const Mat2& P = pp[t];
    const double s = P[0] + r;
    const Vec2 k{P[0] / s, P[2] / s};
    const double innov = z[t] - xp[t][0];
    xf[t] = {xp[t][0] + k[0] * innov, xp[t][1] + k[1] * innov};
    pf[t] = {P[0] - k[0] * P[0], P[1] - k[0] * P[1], P[2] - k[1] * P[0], P[3] - k[1] * P[1]};
  }
  std::vector<Vec2> xs(n);
  xs[n - 1] = xf[n - 1];
  for (std::size_t t = n - 1; t-- > 0;) {
    const Mat2 gain = mul(mul(pf[t], transpose(F)), inverse(pp[t + 1]));
    const Vec2 d{xs[t + 1][0] - xp[t + 1][0], xs[t + 1][1] - xp[t + 1][1]};
    const Vec2 corr = mat_vec(gain, d);
    xs[t] = {xf[t][0] + corr[0], xf[t][1] + corr[1]};
  }
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = xs[t][0];
  return out;
}

FineAlignment smooth_alignment(const std::vector<FramePair>& pairs, const SmoothConfig& cfg) {
  FineAlignment out;
  out.pairs = pairs;
  if (pairs.empty()) return out;
  std::vector<double> xs(pairs.size()), ys(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    xs[i] = static_cast<double>(pairs[i].first);
    ys[i] = static_cast<double>(pairs[i].second);
  }
  auto sx = rts_smooth(xs, cfg);
  auto sy = rts_smooth(ys, cfg);
  for (std::size_t i = 1; i < sx.size(); ++i) {
    sx[i] = std::max(sx[i], sx[i - 1]);
    sy[i] = std::max(sy[i], sy[i - 1]);
  }
  out.smoothed.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out.smoothed[i] = {sx[i], sy[i]};
  return out;
}

void write_alignment(const FineAlignment& a, const std::string& path) {
  if (a.smoothed.size() != a.pairs.size()) throw ArgumentError("alignment is missing smoothed positions");
  std::string text = std::string(kAlignHeader) + "\n";
  for (std::size_t t = 0; t < a.pairs.size(); ++t)
    text += std::to_string(t) + "," + std::to_string(a.pairs[t].first) + "," + std::to_string(a.pairs[t].second) +
            "," + io::format_fixed(a.smoothed[t].x, 3) + "," + io::format_fixed(a.smoothed[t].y, 3) + "\n";
  io::write_text(path, text);
}

FineAlignment read_alignment(const std::string& path) {
  const auto table = io::read_csv(path, kAlignHeader);
  FineAlignment a;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.as_int(i, 0) != static_cast<long long>(i))
      throw DataError(path + ": data row " + std::to_string(i + 1) + ": playback index out of sequence");
    const auto fx = table.as_int(i, 1), fy = table.as_int(i, 2);
    if (fx < 0 || fy < 0) throw DataError(path + ": data row " + std::to_string(i + 1) + ": negative frame");
    a.pairs.emplace_back(static_cast<std::size_t>(fx), static_cast<std::size_t>(fy));
    a.smoothed.push_back({table.as_double(i, 3), table.as_double(i, 4)});
  }
  return a;
}

}  // namespace tsync::refine
