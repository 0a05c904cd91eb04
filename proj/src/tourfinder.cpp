// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/tourfinder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsync/csv.hpp"
#include "tsync/errors.hpp"

namespace tsync::tour {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr const char* kTourHeader = "frame_x,frame_y,cost,segment_id";

enum Dir : std::uint8_t { kNone = 0, kDiag, kDown, kRight, kStart };

struct Propagation {
  std::size_t r0, c0, rows, cols;
  std::vector<double> acc;
  std::vector<std::uint8_t> dir;

  double& at(std::size_t r, std::size_t c) { return acc[(r - r0) * cols + (c - c0)]; }
  std::uint8_t& d(std::size_t r, std::size_t c) { return dir[(r - r0) * cols + (c - c0)]; }
};

// Fills accumulated costs over the rectangle [r0, r1] x [c0, c1]. With
// `free_start`, every cell of column c0 is reachable from a zero-cost
// virtual node; otherwise only (r0, c0) starts, at zero.
Propagation propagate(const MatrixD& c, std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1,
                      bool free_start) {
  Propagation p{r0, c0, r1 - r0 + 1, c1 - c0 + 1, {}, {}};
  p.acc.assign(p.rows * p.cols, kInf);
  p.dir.assign(p.rows * p.cols, kNone);
  for (std::size_t i = r0; i <= r1; ++i) {
    for (std::size_t j = c0; j <= c1; ++j) {
      if (i == r0 && j == c0 && !free_start) {
        p.at(i, j) = 0.0;
        p.d(i, j) = kStart;
        continue;
      }
      const double diag = (i > r0 && j > c0) ? p.at(i - 1, j - 1) : kInf;
      const double down = i > r0 ? p.at(i - 1, j) : kInf;
      const double right = j > c0 ? p.at(i, j - 1) : kInf;
      double best = diag;
      std::uint8_t how = kDiag;
      if (down < best) best = down, how = kDown;
      if (right < best) best = right, how = kRight;
      if (free_start && j == c0 && 0.0 <= best) best = 0.0, how = kStart;
      if (best == kInf) continue;
      p.at(i, j) = c(i, j) + best;
      p.d(i, j) = how;
    }
  }
  return p;
}

std::vector<PathNode> backtrack(Propagation& p, const MatrixD& c, std::size_t r, std::size_t col) {
  std::vector<PathNode> nodes;
  while (true) {
    nodes.push_back({r, col, c(r, col)});
    const std::uint8_t how = p.d(r, col);
    if (how == kStart) break;
    if (how == kDiag) --r, --col;
    else if (how == kDown) --r;
    else if (how == kRight) --col;
    else throw NumericalError("backtrack reached an unreachable cell");
  }
  std::reverse(nodes.begin(), nodes.end());
  return nodes;
}

// Row of `nodes` at column `col` (first visit), or -1.
long row_at(const std::vector<PathNode>& nodes, std::size_t col) {
  for (const auto& n : nodes)
    if (n.col == col) return static_cast<long>(n.row);
  return -1;
}

}  // namespace

GridPath dijkstra_grid(const MatrixD& c, Cell start, Cell end) {
  if (start.row > end.row || start.col > end.col) throw ArgumentError("path end precedes its start");
  if (end.row >= c.rows() || end.col >= c.cols()) throw ArgumentError("path end outside the matrix");
  for (std::size_t i = start.row; i <= end.row; ++i)
    for (std::size_t j = start.col; j <= end.col; ++j)
      if (!(c(i, j) >= 0.0)) throw ArgumentError("grid search needs non-negative costs");
  auto p = propagate(c, start.row, start.col, end.row, end.col, false);
  GridPath out;
  out.propagated_cost = p.at(end.row, end.col);
  out.nodes = backtrack(p, c, end.row, end.col);
  return out;
}

std::vector<ColumnRange> split_stripes(std::size_t cols, std::size_t stripe_cols, std::size_t overlap_cols) {
  if (overlap_cols < 1 || stripe_cols <= overlap_cols)
    throw ArgumentError("need stripe_cols > overlap_cols >= 1");
  if (cols == 0) return {};
  std::vector<ColumnRange> out;
  const std::size_t advance = stripe_cols - overlap_cols;
  for (std::size_t begin = 0;; begin += advance) {
    const std::size_t end = std::min(cols, begin + stripe_cols);
    out.push_back({begin, end});
    if (end == cols) break;
  }
  return out;
}

std::vector<bool> plausibility_filter(const MatrixD& c, std::span<const PathNode> nodes, std::size_t eps,
                                      double ratio) {
  if (eps < 1) throw ArgumentError("plausibility epsilon must be >= 1");
  std::vector<bool> keep(nodes.size(), true);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const std::size_t r = nodes[k].row, col = nodes[k].col;
    const double threshold = ratio * c(r, col);
    auto higher = [&](std::size_t rr, std::size_t cc) { return c(rr, cc) > threshold; };
    bool ok = true;
    if (r >= eps) ok = ok && higher(r - eps, col);
    if (r + eps < c.rows()) ok = ok && higher(r + eps, col);
    if (col >= eps) ok = ok && higher(r, col - eps);
    if (col + eps < c.cols()) ok = ok && higher(r, col + eps);
    keep[k] = ok;
  }
  return keep;
}

StripeResult stripe_tour(const costmat::CostMatrix& c, ColumnRange range, const TourConfig& cfg,
                         std::size_t stripe_index) {
  if (range.begin >= range.end || range.end > c.cols()) throw ArgumentError("invalid stripe range");
  const std::size_t w = range.end - range.begin;

  // Shift so the stripe's minimum is zero; the search needs c >= 0.
  MatrixD stripe(c.rows(), w);
  double lo = kInf;
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < w; ++j) lo = std::min(lo, c(i, range.begin + j));
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < w; ++j) stripe(i, j) = c(i, range.begin + j) - lo;

  auto p = propagate(stripe, 0, 0, stripe.rows() - 1, w - 1, true);
  std::size_t end_row = 0;
  for (std::size_t i = 1; i < stripe.rows(); ++i)
    if (p.at(i, w - 1) < p.at(end_row, w - 1)) end_row = i;
  auto local = backtrack(p, stripe, end_row, w - 1);

  StripeResult res;
  res.stripe_index = stripe_index;
  res.range = range;
  res.plausible = plausibility_filter(stripe, local, cfg.epsilon, cfg.ratio);
  std::size_t kept = 0;
  for (std::size_t k = 0; k < local.size(); ++k) {
    res.nodes.push_back({local[k].row, local[k].col + range.begin, local[k].cost});
    if (res.plausible[k]) {
      res.total_cost += local[k].cost;
      ++kept;
    }
  }
  res.accepted = kept > 0 && static_cast<double>(kept) >= cfg.accept_fraction * static_cast<double>(local.size());
  res.reason = res.accepted ? Rejection::None : Rejection::Ambiguous;
  return res;
}

MatchingTour MatchingTour::transposed() const {
  MatchingTour t;
  t.x_id = y_id;
  t.y_id = x_id;
  t.rows = cols;
  t.cols = rows;
  t.stride = stride;
  for (const auto& p : pairs) t.pairs.push_back({p.col, p.row, p.cost, p.segment});
  t.covered_cols = static_cast<std::size_t>(std::lround(coverage() * static_cast<double>(rows)));
  return t;
}

MatchingTour stitch_stripes(std::vector<StripeResult>& results, std::size_t tolerance, std::size_t total_cols) {
  MatchingTour tour;
  tour.cols = total_cols;
  const std::size_t n = results.size();
  if (n == 0) return tour;

  // Column ownership: split every overlap at its midpoint.
  std::vector<std::size_t> own_begin(n), own_end(n);
  for (std::size_t k = 0; k < n; ++k) {
    own_begin[k] = k == 0 ? results[k].range.begin : own_end[k - 1];
    if (k + 1 == n) {
      own_end[k] = results[k].range.end;
    } else {
      const std::size_t ob = results[k + 1].range.begin, oe = results[k].range.end;
      own_end[k] = ob + (oe > ob ? (oe - ob) / 2 : 0);
    }
  }

  auto consistent = [&](std::size_t k) {  // stripes k and k + 1
    if (!results[k].accepted || !results[k + 1].accepted) return false;
    const std::size_t joint = own_end[k];
    const long a = row_at(results[k].nodes, joint);
    const long b = row_at(results[k + 1].nodes, joint);
    if (a < 0 || b < 0) return false;
    return static_cast<std::size_t>(std::abs(a - b)) <= tolerance;
  };
  std::vector<bool> link(n > 0 ? n - 1 : 0);
  for (std::size_t k = 0; k + 1 < n; ++k) link[k] = consistent(k);

  std::vector<bool> survive(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!results[k].accepted) continue;
    const bool left = k > 0 && results[k - 1].accepted, right = k + 1 < n && results[k + 1].accepted;
    survive[k] = (!left && !right) || (left && link[k - 1]) || (right && link[k]);
    if (!survive[k]) results[k].reason = Rejection::Disconnected;
  }

  std::uint32_t segment = 0;
  bool open = false;
  for (std::size_t k = 0; k < n; ++k) {
    if (!survive[k]) {
      if (!tour.gaps.empty() && tour.gaps.back().end == own_begin[k])
        tour.gaps.back().end = own_end[k];
      else
        tour.gaps.push_back({own_begin[k], own_end[k]});
      if (open) ++segment;
      open = false;
      continue;
    }
    // A segment continues only across a consistent joint.
    if (open && !(k > 0 && link[k - 1])) ++segment;
    open = true;
    tour.covered_cols += own_end[k] - own_begin[k];
    const auto& r = results[k];
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      const auto& node = r.nodes[i];
      if (!r.plausible[i] || node.col < own_begin[k] || node.col >= own_end[k]) continue;
      if (!tour.pairs.empty() && tour.pairs.back().segment == segment) {
        const auto& last = tour.pairs.back();
        if (node.row < last.row || node.col < last.col) continue;
      }
      tour.pairs.push_back({node.row, node.col, node.cost, segment});
    }
  }
  // Renumber so segment ids are consecutive over the pairs that exist.
  std::uint32_t next = 0;
  for (std::size_t i = 0, prev = 0; i < tour.pairs.size(); ++i) {
    const std::uint32_t old = tour.pairs[i].segment;
    if (i > 0 && old != prev) ++next;
    prev = old;
    tour.pairs[i].segment = next;
  }
  if (tour.pairs.empty()) tour.covered_cols = 0;
  return tour;
}

MatchingTour find_tour(const costmat::CostMatrix& raw, const TourConfig& cfg) {
  const std::size_t small = std::min(raw.rows(), raw.cols());
  const std::size_t rank = std::min(cfg.rank, small > 0 ? small - 1 : 0);
  const auto c = raw.decorrelated ? raw : costmat::decorrelate(raw, rank);
  const auto ranges = split_stripes(c.cols(), cfg.stripe_cols, cfg.overlap_cols);
  std::vector<StripeResult> results;
  results.reserve(ranges.size());
  for (std::size_t k = 0; k < ranges.size(); ++k) results.push_back(stripe_tour(c, ranges[k], cfg, k));
  auto tour = stitch_stripes(results, cfg.tolerance, c.cols());
  tour.rows = c.rows();
  tour.stride = c.stride;
  return tour;
}

MatchingTour find_tour(const embed::DescriptorSeq& dx, const embed::DescriptorSeq& dy, const TourConfig& cfg) {
  return find_tour(costmat::build_cost_matrix(dx, dy), cfg);
}

void write_tour(const MatchingTour& tour, const std::string& path) {
  std::string text = std::string(kTourHeader) + "\n";
  for (const auto& p : tour.pairs)
    text += std::to_string(p.row * tour.stride) + "," + std::to_string(p.col * tour.stride) + "," +
            io::format_fixed(p.cost, 6) + "," + std::to_string(p.segment) + "\n";
  io::write_text(path, text);
}

MatchingTour read_tour(const std::string& path, std::uint32_t stride) {
  if (stride == 0) throw ArgumentError("stride must be positive");
  const auto table = io::read_csv(path, kTourHeader);
  MatchingTour tour;
  tour.stride = stride;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto fx = table.as_int(i, 0), fy = table.as_int(i, 1), seg = table.as_int(i, 3);
    if (fx < 0 || fy < 0 || seg < 0 || fx % stride != 0 || fy % stride != 0)
      throw DataError(path + ": data row " + std::to_string(i + 1) + ": frame not on the stride grid");
    tour.pairs.push_back({static_cast<std::size_t>(fx) / stride, static_cast<std::size_t>(fy) / stride,
                          table.as_double(i, 2), static_cast<std::uint32_t>(seg)});
    tour.rows = std::max(tour.rows, tour.pairs.back().row + 1);
    tour.cols = std::max(tour.cols, tour.pairs.back().col + 1);
  }
  return tour;
}

}  // namespace tsync::tour
