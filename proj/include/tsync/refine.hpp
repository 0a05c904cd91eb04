// Licensed under the Apache License 2.0 (see LICENSE file).

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsync/embedder.hpp"
#include "tsync/tourfinder.hpp"

namespace tsync::refine {

using FramePair = std::pair<std::size_t, std::size_t>;

struct SmoothPoint {
  double x = 0.0;
  double y = 0.0;
};

struct FineAlignment {
  std::vector<FramePair> pairs;
  std::vector<SmoothPoint> smoothed;  // same length as pairs, index = playback step
};

struct SmoothConfig {
  double process_variance = 1e-3;
  double measurement_variance = 1.0;
};

// Re-solves each run of `chunk` consecutive coarse nodes at full frame
// resolution. Each chunk's box is grown by one stride on every side and
// solved between the grown corners; only the chunk's own rows are kept.
// `dx_full` / `dy_full` must be embedded at stride 1. Segments of the
// coarse tour are refined separately.
std::vector<FramePair> refine_tour(const tour::MatchingTour& coarse, const embed::DescriptorSeq& dx_full,
                                   const embed::DescriptorSeq& dy_full, std::size_t chunk = 30);

// Constant-velocity Kalman filter + RTS smoother per coordinate, then a
// running max so neither timeline ever goes backwards.
FineAlignment smooth_alignment(const std::vector<FramePair>& pairs, const SmoothConfig& cfg = {});

// Unclamped RTS output for one coordinate; exposed for testing.
std::vector<double> rts_smooth(const std::vector<double>& z, const SmoothConfig& cfg);

void write_alignment(const FineAlignment& a, const std::string& path);
FineAlignment read_alignment(const std::string& path);

}  // namespace tsync::refine
