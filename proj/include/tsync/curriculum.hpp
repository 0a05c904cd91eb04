// Licensed under the Apache License 2.0 (see LICENSE file).
//
// Self-labelling loop. Iteration 0 trains on frames that are close in time
// within one journey; later iterations harvest positives from matching tours
// between journeys (and, from iteration 2, from tours composed through a
// shared middle journey) together with hard negatives.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsync/corpus.hpp"
#include "tsync/costmat.hpp"
#include "tsync/embedder.hpp"
#include "tsync/evaluate.hpp"
#include "tsync/refine.hpp"
#include "tsync/tourfinder.hpp"

namespace tsync::curriculum {

using embed::TripletLabel;
using embed::Wave;
using tour::MatchingTour;

std::vector<TripletLabel> sample_intra(const std::string& journey, std::size_t n_frames, std::size_t n_labels,
                                       std::size_t window, std::size_t min_negative_gap, std::uint64_t seed);

// Positives are tour nodes (anchor in X, positive in Y); each negative is
// the cheapest Y column at least `off_path_margin` coarse frames away from
// every tour column in the anchor's row. Frame indices are unstrided.
std::vector<TripletLabel> sample_inter(const MatchingTour& tour, const costmat::CostMatrix& c,
                                       std::size_t n_labels, std::size_t off_path_margin, std::uint64_t seed,
                                       Wave wave = Wave::Inter1);

// Composes X->V and V->Y into X->Y. Pairs whose V entries lie more than
// `tolerance` coarse frames apart are not matched.
MatchingTour compose_tours(const MatchingTour& tour_xv, const MatchingTour& tour_vy, std::size_t tolerance);

// Connectivity of journeys under accepted matching tours.
class CollectionIndex {
 public:
  struct Edge {
    std::string x;
    std::string y;
    std::size_t tour = 0;  // index into tours()
  };

  CollectionIndex() = default;
  explicit CollectionIndex(const std::vector<std::string>& journeys);

  // Adds the edge and merges the two classes when the tour is non-empty and
  // covers at least `min_coverage` of its columns. Returns whether it did.
  bool update(const std::string& x, const std::string& y, MatchingTour tour, double min_coverage);

  bool contains(const std::string& id) const { return slot_.contains(id); }
  bool same_class(const std::string& a, const std::string& b) const;
  std::vector<std::vector<std::string>> classes() const;  // each sorted, ordered by first member
  std::size_t class_count() const;

  const std::vector<std::string>& journeys() const { return ids_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<MatchingTour>& tours() const { return tours_; }

  // Tour from a to b along a direct edge, oriented a -> b.
  std::optional<MatchingTour> direct_tour(const std::string& a, const std::string& b) const;
  // Shortest edge path a, ..., b (journey ids), empty if not connected.
  std::vector<std::string> path(const std::string& a, const std::string& b) const;

 private:
  std::size_t root(std::size_t i) const;

  std::vector<std::string> ids_;
  std::map<std::string, std::size_t, std::less<>> slot_;
  mutable std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<Edge> edges_;
  std::vector<MatchingTour> tours_;
};

// Attempts an alignment and reports whether it was accepted into the index.
using Matcher = std::function<bool(const std::string& x, const std::string& y)>;

// Greedy collection synchronisation. Each journey, in order, is tried
// against the latest member of every existing class until one accepts;
// otherwise it opens a new class. Leftover budget goes to random probes
// between different classes. Returns the pairs tried, in order.
std::vector<std::pair<std::string, std::string>> plan_pairs(const CollectionIndex& index,
                                                            const std::vector<std::string>& journeys,
                                                            std::size_t budget, const Matcher& matcher,
                                                            std::uint64_t seed);

// Direct-alignment budget: `configured` when positive, else n * ceil(log2 n).
std::size_t pair_budget(std::size_t n, std::size_t configured);

// Tour a -> b composed along the index path (direct edge if there is one).
std::optional<MatchingTour> tour_via_index(const CollectionIndex& index, const std::string& a, const std::string& b,
                                           std::size_t tolerance);

// ---------------------------------------------------------------------------

struct CurriculumConfig {
  std::size_t hidden_dim = 128;
  std::size_t descriptor_dim = 64;
  std::size_t stride = 10;
  std::size_t iterations = 3;
  std::size_t intra_labels_per_journey = 1500;
  std::size_t intra_window = 15;
  std::size_t negative_gap = 150;
  std::size_t inter_labels_per_tour = 400;
  std::size_t off_path_margin = 18;
  std::size_t transitive_pairs = 0;  // max composed pairs per iteration, 0 = all
  double min_coverage = 0.5;
  std::size_t budget = 0;  // direct alignments per iteration, 0 = n * ceil(log2 n)
  std::size_t chunk = 30;
  std::size_t eval_tolerance = 4;
  embed::TrainConfig train;
  tour::TourConfig tour;
  refine::SmoothConfig smooth;
  std::uint64_t seed = 1;
};

struct PlannedPair {
  std::string x;
  std::string y;
  bool accepted = false;
};

struct IterationReport {
  std::size_t iteration = 0;
  std::size_t labels_intra = 0;
  std::size_t labels_inter = 0;
  std::size_t labels_transitive = 0;
  std::size_t pairs_planned = 0;
  std::size_t tours_found = 0;
  double tours_accepted_fraction = 0.0;
  double eval_offset_le4_fraction = 0.0;
  double final_loss = 0.0;
  std::vector<PlannedPair> plan;  // not serialised
};

std::string report_to_json(const IterationReport& r);

struct CurriculumHooks {
  std::function<void(const IterationReport&)> on_report;
  std::function<void(std::size_t, const std::vector<TripletLabel>&)> on_labels;
};

struct CurriculumResult {
  embed::EmbeddingModel model;
  std::vector<IterationReport> reports;
};

CurriculumResult run_curriculum(const corpus::StoredCorpus& corpus, const CurriculumConfig& cfg,
                                const CurriculumHooks& hooks = {});

// Coarse tour plus full-resolution refinement for one journey pair.
struct PairAlignment {
  MatchingTour tour;
  refine::FineAlignment fine;
};

PairAlignment align_pair(const embed::EmbeddingModel& model, const MatrixF& frames_x, const MatrixF& frames_y,
                         const CurriculumConfig& cfg);

// Mean hit rate over every ground-truth pair in the corpus (0 for pairs
// with no tour).
double evaluate_model(const embed::EmbeddingModel& model, const corpus::StoredCorpus& corpus,
                      const CurriculumConfig& cfg);

void write_labels(const std::vector<TripletLabel>& labels, const std::string& path);
std::vector<TripletLabel> read_labels(const std::string& path);

}  // namespace tsync::curriculum
