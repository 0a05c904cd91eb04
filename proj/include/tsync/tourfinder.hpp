// Licensed under the Apache License 2.0 (see LICENSE file).
//
// Matching tours: monotone frame-pair paths through a cost matrix. The
// matrix is cut into overlapping column stripes; each stripe gets its own
// shortest-path search with a free start row (zero-cost virtual column on
// the left) and a free end row, ambiguous nodes are filtered out, and the
// accepted stripes are stitched into one tour. An accepted stripe is dropped
// when it disagrees with every accepted neighbour at the joint column.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsync/costmat.hpp"
#include "tsync/embedder.hpp"

namespace tsync::tour {

struct PathNode {
  std::size_t row = 0;
  std::size_t col = 0;
  double cost = 0.0;

  bool operator==(const PathNode&) const = default;
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
};

struct GridPath {
  std::vector<PathNode> nodes;
  double propagated_cost = 0.0;  // accumulated cost at the end cell (start cell excluded)
};

// Minimum-cost monotone path from `start` to `end` using down, right and
// diagonal moves. Costs must be non-negative. Ties prefer diagonal, then
// down, then right.
GridPath dijkstra_grid(const MatrixD& c, Cell start, Cell end);

struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  bool operator==(const ColumnRange&) const = default;
};

std::vector<ColumnRange> split_stripes(std::size_t cols, std::size_t stripe_cols, std::size_t overlap_cols);

enum class Rejection : std::uint8_t { None, Ambiguous, Disconnected };

struct StripeResult {
  std::size_t stripe_index = 0;
  ColumnRange range;
  std::vector<PathNode> nodes;  // full-matrix coordinates; cost = shifted stripe entry
  std::vector<bool> plausible;  // per node
  double total_cost = 0.0;      // sum of costs over plausible nodes
  bool accepted = false;
  Rejection reason = Rejection::None;
};

struct TourConfig {
  std::size_t rank = 5;
  std::size_t stripe_cols = 270;
  std::size_t overlap_cols = 90;
  std::size_t tolerance = 6;      // coarse frames allowed between neighbouring stripes
  std::size_t epsilon = 3;        // plausibility probe offset
  double ratio = 6.0 / 5.0;       // plausibility threshold
  double accept_fraction = 0.5;   // plausible-node share needed to accept a stripe
};

// Node p is kept iff every in-bounds alternative (row +- eps, col) and
// (row, col +- eps) costs strictly more than ratio * c(p).
std::vector<bool> plausibility_filter(const MatrixD& c, std::span<const PathNode> nodes, std::size_t eps,
                                      double ratio = 6.0 / 5.0);

StripeResult stripe_tour(const costmat::CostMatrix& c, ColumnRange range, const TourConfig& cfg,
                         std::size_t stripe_index = 0);

struct TourPair {
  std::size_t row = 0;
  std::size_t col = 0;
  double cost = 0.0;
  std::uint32_t segment = 0;

  bool operator==(const TourPair&) const = default;
};

struct MatchingTour {
  std::string x_id;
  std::string y_id;
  std::size_t rows = 0;  // coarse frames of X
  std::size_t cols = 0;  // coarse frames of Y
  std::uint32_t stride = 1;
  std::vector<TourPair> pairs;
  std::vector<ColumnRange> gaps;
  std::size_t covered_cols = 0;

  bool empty() const { return pairs.empty(); }
  double coverage() const { return cols == 0 ? 0.0 : static_cast<double>(covered_cols) / static_cast<double>(cols); }
  // Same tour seen from Y to X.
  MatchingTour transposed() const;
};

// Rejected and dropped stripes become gaps; segment ids change at every
// gap or inconsistent joint.
MatchingTour stitch_stripes(std::vector<StripeResult>& results, std::size_t tolerance, std::size_t total_cols);

// The whole pipeline on an already built raw cost matrix.
MatchingTour find_tour(const costmat::CostMatrix& raw, const TourConfig& cfg);
MatchingTour find_tour(const embed::DescriptorSeq& dx, const embed::DescriptorSeq& dy, const TourConfig& cfg);

// CSV with frame indices in original (unstrided) units.
void write_tour(const MatchingTour& tour, const std::string& path);
MatchingTour read_tour(const std::string& path, std::uint32_t stride);

}  // namespace tsync::tour
