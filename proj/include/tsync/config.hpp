// Licensed under the Apache License 2.0 (see LICENSE file).
//
// Flat key=value configuration shared by every command. Durations given in
// video seconds are turned into coarse columns through fps and stride when
// the pipeline configs are derived.

#pragma once

#include <string>
#include <vector>

#include "tsync/corpus.hpp"
#include "tsync/curriculum.hpp"

namespace tsync {

struct Config {
  corpus::CorpusParams corpus;

  std::size_t hidden_dim = 128;
  std::size_t descriptor_dim = 64;
  double margin = 0.5;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;

  double fps = 30.0;
  std::size_t stride = 10;
  double stripe_seconds = 90.0;
  double overlap_seconds = 30.0;
  double tolerance_seconds = 2.0;
  std::size_t rank = 5;
  double ratio = 6.0 / 5.0;
  std::size_t epsilon = 3;
  double accept_fraction = 0.5;

  std::size_t iterations = 3;
  std::size_t intra_window = 15;
  std::size_t negative_gap = 150;
  std::size_t intra_labels = 1500;
  std::size_t inter_labels = 400;
  std::size_t off_path_margin = 0;  // 0 = three stitching tolerances
  std::size_t transitive_pairs = 0;
  double min_coverage = 0.5;
  std::size_t budget = 0;

  std::size_t chunk = 30;
  double kalman_q = 1e-3;
  double kalman_r = 1.0;
  std::size_t eval_tolerance = 4;
  std::uint64_t seed = 1;

  // Throws ArgumentError naming the key on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  void validate() const;

  std::size_t seconds_to_columns(double seconds) const;
  tour::TourConfig tour_config() const;
  curriculum::CurriculumConfig curriculum_config() const;

  // Sorted key=value lines; load(to_text()) reproduces the config.
  std::string to_text() const;
};

// Blank lines and lines starting with '#' are ignored.
Config load_config(const std::string& path);
Config parse_config(const std::string& text, const std::string& origin = "<config>");

}  // namespace tsync
