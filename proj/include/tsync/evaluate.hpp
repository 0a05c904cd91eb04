// Licensed under the Apache License 2.0 (see LICENSE file).

#pragma once

#include <utility>
#include <vector>

#include "tsync/corpus.hpp"

namespace tsync::eval {

struct Metrics {
  double coverage = 0.0;       // ground-truth frames with at least one prediction
  double hit_rate = 0.0;       // predicted pairs within tolerance of the ground truth
  double mean_offset = 0.0;    // over predicted pairs that have a ground-truth partner
  double median_offset = 0.0;
  std::size_t predicted = 0;
  std::size_t comparable = 0;  // predicted pairs whose frame_x appears in the ground truth
};

// Predictions are (frame_a, frame_b) in the ground truth's orientation.
// A prediction for a frame the ground truth does not cover counts as a miss.
Metrics evaluate(const std::vector<std::pair<std::size_t, std::size_t>>& predicted,
                 const corpus::GroundTruthAlignment& gt, std::size_t tolerance);

}  // namespace tsync::eval
