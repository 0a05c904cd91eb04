// Licensed under the Apache License 2.0 (see LICENSE file).
//
// Synthetic "video" corpus: journeys along shared routes, each frame a
// feature vector derived from the route landmark at the journey's position,
// corrupted by per-journey appearance changes. Ground truth alignments come
// from the known position maps.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsync/matrix.hpp"

namespace tsync::corpus {

struct Route {
  std::string id;
  MatrixD landmarks;  // length x feature_dim, one row per unit of arc length

  std::size_t length() const { return landmarks.rows(); }
  std::size_t feature_dim() const { return landmarks.cols(); }
};

// Piecewise-constant speed in arc-length units per frame. speed == 0 is a
// stand-still (e.g. waiting at a light).
struct SpeedSegment {
  std::size_t frames = 0;
  double speed = 0.0;
};

struct SpeedProfile {
  double start_position = 0.0;
  std::vector<SpeedSegment> segments;  // frames beyond the last segment keep its speed
};

// Half-open frame range replaced by unrelated content (lens cleaned, camera remounted).
struct NoiseBlock {
  std::size_t start = 0;
  std::size_t length = 0;
};

struct Appearance {
  double noise_sigma = 0.0;         // per-frame additive gaussian noise
  std::vector<double> bias;         // constant per-journey offset; empty = none
  double drift_amplitude = 0.0;     // seasonal sinusoidal drift
  double drift_period = 1000.0;     // frames
  std::vector<NoiseBlock> noise_blocks;
};

struct Journey {
  std::string id;
  std::string route_id;
  std::vector<double> position_of_frame;
  std::uint64_t appearance_seed = 0;
  Appearance appearance;

  std::size_t n_frames() const { return position_of_frame.size(); }
};

// Frame t of a journey is row t of `frames`.
struct JourneyData {
  Journey journey;
  MatrixF frames;
};

struct RawFrame {
  std::string_view journey_id;
  std::size_t frame_index;
  std::span<const float> features;
};

struct GroundTruthAlignment {
  std::string journey_a;
  std::string journey_b;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

inline constexpr double kPairingTolerance = 0.5;

Route generate_route(std::size_t length, std::size_t feature_dim, std::uint64_t seed,
                     double coherence = 0.9, double max_step_fraction = 0.6);

JourneyData generate_journey(const Route& route, std::string journey_id, std::size_t n_frames,
                             const SpeedProfile& profile, const Appearance& appearance,
                             std::uint64_t seed);

std::vector<double> positions_from_profile(const SpeedProfile& profile, std::size_t n_frames);

// Linear interpolation between the two landmarks bracketing `position`.
std::vector<double> interpolate_landmark(const Route& route, double position);

std::optional<GroundTruthAlignment> ground_truth_alignment(const Journey& a, const Journey& b);

// ---------------------------------------------------------------------------
// Whole-corpus generation and persistence.

struct CorpusParams {
  std::uint64_t seed = 1;
  std::size_t n_routes = 2;
  std::size_t journeys_per_route = 6;
  std::size_t route_length = 400;
  std::size_t feature_dim = 32;
  std::size_t frames_per_journey = 3000;
  double base_speed = 0.1;
  double speed_jitter = 0.3;        // segment speeds in base * [1 - j, 1 + j]
  std::size_t plateau_frames = 45;  // one stand-still per journey; 0 disables
  double route_coherence = 0.9;
  double noise_sigma = 0.05;
  double bias_scale = 0.3;
  double drift_amplitude = 0.3;
  double drift_period = 1500.0;
  double noise_block_fraction = 0.10;  // per journey; 0 disables
};

struct SyntheticCorpus {
  CorpusParams params;
  std::vector<Route> routes;
  std::vector<JourneyData> journeys;
  std::vector<GroundTruthAlignment> ground_truth;  // same-route pairs a < b with overlap
};

SyntheticCorpus generate_corpus(const CorpusParams& params);

// On-disk corpus as consumed by training: frames and ground truth only.
struct StoredJourney {
  std::string id;
  MatrixF frames;
};

struct StoredCorpus {
  std::map<std::string, std::string> meta;
  std::vector<StoredJourney> journeys;  // ordered by id
  std::vector<GroundTruthAlignment> ground_truth;

  const StoredJourney* find(std::string_view id) const;
};

StoredCorpus to_stored(const SyntheticCorpus& corpus);
void write_corpus(const StoredCorpus& corpus, const std::string& dir);
StoredCorpus read_corpus(const std::string& dir);

void write_journey_file(const MatrixF& frames, const std::string& path);
MatrixF read_journey_file(const std::string& path);

void write_ground_truth(const GroundTruthAlignment& gt, const std::string& path);
GroundTruthAlignment read_ground_truth(const std::string& path, std::string a, std::string b);

std::string ground_truth_filename(std::string_view a, std::string_view b);

}  // namespace tsync::corpus
