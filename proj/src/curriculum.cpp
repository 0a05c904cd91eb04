// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include "json.hpp"
#include "tsync/csv.hpp"
#include "tsync/errors.hpp"
#include "tsync/parallel.hpp"
#include "tsync/rng.hpp"

namespace tsync::curriculum {
namespace {

constexpr const char* kLabelHeader = "wave,a_journey,a_frame,p_journey,p_frame,n_journey,n_frame";

std::size_t absdiff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

embed::DescriptorSeq subsample(const embed::DescriptorSeq& full, std::size_t stride) {
  const std::size_t n = (full.size() + stride - 1) / stride;
  embed::DescriptorSeq out{MatrixF(n, full.dim()), static_cast<std::uint32_t>(stride)};
  for (std::size_t i = 0; i < n; ++i) {
    auto src = full.values.row(i * stride);
    std::copy(src.begin(), src.end(), out.values.row(i).begin());
  }
  return out;
}

costmat::CostMatrix transposed(const costmat::CostMatrix& c) {
  return {c.values.transposed(), c.stride, c.decorrelated};
}

PairAlignment align_descriptors(const embed::DescriptorSeq& full_x, const embed::DescriptorSeq& full_y,
                                const CurriculumConfig& cfg) {
  PairAlignment out;
  out.tour = tour::find_tour(subsample(full_x, cfg.stride), subsample(full_y, cfg.stride), cfg.tour);
  if (!out.tour.empty())
    out.fine = refine::smooth_alignment(refine::refine_tour(out.tour, full_x, full_y, cfg.chunk), cfg.smooth);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Label sampling

std::vector<TripletLabel> sample_intra(const std::string& journey, std::size_t n_frames, std::size_t n_labels,
                                       std::size_t window, std::size_t min_negative_gap, std::uint64_t seed) {
  if (window < 1) throw ArgumentError("intra window must be >= 1");
  if (min_negative_gap <= window) throw ArgumentError("negative gap must exceed the positive window");
  if (n_frames < 2 * min_negative_gap + 1)
    throw DataError("journey '" + journey + "' has " + std::to_string(n_frames) + " frames, needs at least " +
                    std::to_string(2 * min_negative_gap + 1));
  Rng rng(seed);
  std::vector<TripletLabel> out;
  out.reserve(n_labels);
  const std::size_t last = n_frames - 1;
  for (std::size_t i = 0; i < n_labels; ++i) {
    const std::size_t a = uniform_index(rng, 0, last);
    const std::size_t lo = a >= window ? a - window : 0;
    const std::size_t hi = std::min(last, a + window);
    // Draw from [lo, hi] minus {a}.
    std::size_t p = uniform_index(rng, lo, hi - 1);
    if (p >= a) ++p;
    // Negatives live in [0, a - gap] and [a + gap, last].
    const std::size_t left = a >= min_negative_gap ? a - min_negative_gap + 1 : 0;
    const std::size_t right = a + min_negative_gap <= last ? last - (a + min_negative_gap) + 1 : 0;
    const std::size_t pick = uniform_index(rng, 0, left + right - 1);
    const std::size_t n = pick < left ? pick : a + min_negative_gap + (pick - left);
    out.push_back({{journey, a}, {journey, p}, {journey, n}, Wave::Intra0});
  }
  return out;
}

std::vector<TripletLabel> sample_inter(const MatchingTour& tour, const costmat::CostMatrix& c,
                                       std::size_t n_labels, std::size_t off_path_margin, std::uint64_t seed,
                                       Wave wave) {
  if (tour.empty()) return {};
  if (off_path_margin < 1) throw ArgumentError("off-path margin must be >= 1");
  const auto& nodes = tour.pairs;
  for (const auto& p : nodes)
    if (p.row >= c.rows() || p.col >= c.cols()) throw ArgumentError("tour node outside the cost matrix");

  std::vector<std::size_t> chosen(nodes.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (n_labels < nodes.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < n_labels; ++i) std::swap(chosen[i], chosen[uniform_index(rng, i, chosen.size() - 1)]);
    chosen.resize(n_labels);
    std::sort(chosen.begin(), chosen.end());
  }

  const std::uint32_t s = tour.stride;
  std::vector<TripletLabel> out;
  for (std::size_t idx : chosen) {
    const auto& node = nodes[idx];
    std::vector<std::size_t> on_path;
    for (const auto& q : nodes)
      if (q.row == node.row) on_path.push_back(q.col);
    std::size_t best = c.cols();
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t col = 0; col < c.cols(); ++col) {
      bool far = true;
      for (std::size_t tc : on_path) far = far && absdiff(col, tc) >= off_path_margin;
      if (far && c(node.row, col) < best_cost) best_cost = c(node.row, col), best = col;
    }
    if (best == c.cols()) continue;
    out.push_back({{tour.x_id, node.row * s}, {tour.y_id, node.col * s}, {tour.y_id, best * s}, wave});
  }
  return out;
}

MatchingTour compose_tours(const MatchingTour& xv, const MatchingTour& vy, std::size_t tolerance) {
  if (xv.y_id != vy.x_id)
    throw ArgumentError("tours do not share a middle journey ('" + xv.y_id + "' vs '" + vy.x_id + "')");
  MatchingTour out;
  out.x_id = xv.x_id;
  out.y_id = vy.y_id;
  out.rows = xv.rows;
  out.cols = vy.cols;
  out.stride = xv.stride;

  std::uint32_t segment = 0, last_src_segment = 0;
  for (const auto& p : xv.pairs) {
    const std::size_t v = p.col;
    const std::size_t lo = v >= tolerance ? v - tolerance : 0;
    auto it = std::lower_bound(vy.pairs.begin(), vy.pairs.end(), lo,
                               [](const tour::TourPair& q, std::size_t r) { return q.row < r; });
    const tour::TourPair* best = nullptr;
    for (; it != vy.pairs.end() && it->row <= v + tolerance; ++it) {
      if (!best) {
        best = &*it;
        continue;
      }
      const std::size_t d = absdiff(it->row, v), bd = absdiff(best->row, v);
      if (d < bd || (d == bd && it->col < best->col)) best = &*it;
    }
    if (!best) continue;
    if (!out.pairs.empty()) {
      const auto& last = out.pairs.back();
      if (p.row < last.row || best->col < last.col) continue;
      if (p.segment != last_src_segment) ++segment;
    }
    last_src_segment = p.segment;
    out.pairs.push_back({p.row, best->col, p.cost + best->cost, segment});
  }
  // Coverage: span of Y columns per segment.
  for (std::size_t i = 0; i < out.pairs.size();) {
    std::size_t j = i;
    while (j + 1 < out.pairs.size() && out.pairs[j + 1].segment == out.pairs[i].segment) ++j;
    out.covered_cols += out.pairs[j].col - out.pairs[i].col + 1;
    i = j + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collection index

CollectionIndex::CollectionIndex(const std::vector<std::string>& journeys) {
  for (const auto& id : journeys) {
    if (slot_.contains(id)) continue;
    slot_[id] = ids_.size();
    ids_.push_back(id);
    parent_.push_back(parent_.size());
    size_.push_back(1);
  }
}

std::size_t CollectionIndex::root(std::size_t i) const {
  while (parent_[i] != i) {
    parent_[i] = parent_[parent_[i]];
    i = parent_[i];
  }
  return i;
}

bool CollectionIndex::update(const std::string& x, const std::string& y, MatchingTour tour, double min_coverage) {
  auto ix = slot_.find(x), iy = slot_.find(y);
  if (ix == slot_.end() || iy == slot_.end()) throw ArgumentError("journey not in the index");
  if (tour.empty() || tour.coverage() < min_coverage) return false;
  tour.x_id = x;
  tour.y_id = y;
  edges_.push_back({x, y, tours_.size()});
  tours_.push_back(std::move(tour));
  std::size_t a = root(ix->second), b = root(iy->second);
  if (a != b) {
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }
  return true;
}

bool CollectionIndex::same_class(const std::string& a, const std::string& b) const {
  auto ia = slot_.find(a), ib = slot_.find(b);
  if (ia == slot_.end() || ib == slot_.end()) return false;
  return root(ia->second) == root(ib->second);
}

std::vector<std::vector<std::string>> CollectionIndex::classes() const {
  std::map<std::size_t, std::vector<std::string>> by_root;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const std::size_t r = root(i);
    if (!by_root.contains(r)) order.push_back(r);
    by_root[r].push_back(ids_[i]);
  }
  std::vector<std::vector<std::string>> out;
  for (std::size_t r : order) {
    auto members = by_root[r];
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

std::size_t CollectionIndex::class_count() const {
  std::set<std::size_t> roots;
  for (std::size_t i = 0; i < ids_.size(); ++i) roots.insert(root(i));
  return roots.size();
}

std::optional<MatchingTour> CollectionIndex::direct_tour(const std::string& a, const std::string& b) const {
  for (const auto& e : edges_) {
    if (e.x == a && e.y == b) return tours_[e.tour];
    if (e.x == b && e.y == a) return tours_[e.tour].transposed();
  }
  return std::nullopt;
}

std::vector<std::string> CollectionIndex::path(const std::string& a, const std::string& b) const {
  if (!contains(a) || !contains(b)) return {};
  if (a == b) return {a};
  std::map<std::string, std::string> prev;
  std::deque<std::string> queue{a};
  prev[a] = a;
  while (!queue.empty()) {
    const std::string cur = queue.front();
    queue.pop_front();
    for (const auto& e : edges_) {
      const std::string* next = e.x == cur ? &e.y : (e.y == cur ? &e.x : nullptr);
      if (!next || prev.contains(*next)) continue;
      prev[*next] = cur;
      if (*next == b) {
        std::vector<std::string> out{b};
        for (std::string at = b; at != a;) out.push_back(at = prev[at]);
        std::reverse(out.begin(), out.end());
        return out;
      }
      queue.push_back(*next);
    }
  }
  return {};
}

std::vector<std::pair<std::string, std::string>> plan_pairs(const CollectionIndex& index,
                                                            const std::vector<std::string>& journeys,
                                                            std::size_t budget, const Matcher& matcher,
                                                            std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> tried;
  std::vector<std::string> openers;   // first member of each class, in creation order
  std::vector<std::string> assigned;  // assignment order
  for (const auto& j : journeys) {
    if (tried.size() >= budget) break;
    bool matched = false;
    std::vector<std::string> reps;
    for (const auto& o : openers) {
      // Latest assigned member of o's class; classes merged by earlier
      // probes show up once.
      std::string rep;
      for (auto it = assigned.rbegin(); it != assigned.rend(); ++it)
        if (index.same_class(*it, o)) {
          rep = *it;
          break;
        }
      if (std::find(reps.begin(), reps.end(), rep) == reps.end()) reps.push_back(rep);
    }
    for (const auto& rep : reps) {
      if (tried.size() >= budget) break;
      tried.emplace_back(rep, j);
      if (matcher(rep, j)) {
        matched = true;
        break;
      }
    }
    assigned.push_back(j);
    if (!matched) openers.push_back(j);
  }

  Rng rng(seed);
  std::size_t misses = 0;
  auto classes_left = [&] {
    std::set<std::string> reps;
    for (const auto& j : journeys) {
      std::string r = j;
      for (const auto& k : journeys)
        if (index.same_class(j, k)) {
          r = std::min(r, k);
        }
      reps.insert(r);
    }
    return reps.size();
  };
  while (tried.size() < budget && journeys.size() > 1 && misses < 4 * budget + 16 && classes_left() > 1) {
    const auto& a = journeys[uniform_index(rng, 0, journeys.size() - 1)];
    const auto& b = journeys[uniform_index(rng, 0, journeys.size() - 1)];
    if (a == b || index.same_class(a, b)) {
      ++misses;
      continue;
    }
    tried.emplace_back(a, b);
    matcher(a, b);
  }
  return tried;
}

std::size_t pair_budget(std::size_t n, std::size_t configured) {
  if (configured > 0) return configured;
  if (n < 2) return 0;
  std::size_t log = 0;
  while ((std::size_t{1} << log) < n) ++log;
  return n * log;
}

std::optional<MatchingTour> tour_via_index(const CollectionIndex& index, const std::string& a, const std::string& b,
                                           std::size_t tolerance) {
  const auto hops = index.path(a, b);
  if (hops.size() < 2) return std::nullopt;
  auto tour = index.direct_tour(hops[0], hops[1]);
  for (std::size_t i = 2; i < hops.size() && tour && !tour->empty(); ++i)
    tour = compose_tours(*tour, *index.direct_tour(hops[i - 1], hops[i]), tolerance);
  return tour;
}

// ---------------------------------------------------------------------------
// Loop

std::string report_to_json(const IterationReport& r) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["labels_produced"] = {{"intra", r.labels_intra}, {"inter", r.labels_inter}, {"transitive", r.labels_transitive}};
  j["pairs_planned"] = r.pairs_planned;
  j["tours_found"] = r.tours_found;
  j["tours_accepted_fraction"] = r.tours_accepted_fraction;
  j["eval_offset_le4_fraction"] = r.eval_offset_le4_fraction;
  j["final_loss"] = r.final_loss;
  return j.dump();
}

PairAlignment align_pair(const embed::EmbeddingModel& model, const MatrixF& frames_x, const MatrixF& frames_y,
                         const CurriculumConfig& cfg) {
  return align_descriptors(embed::embed_sequence(model, frames_x, 1), embed::embed_sequence(model, frames_y, 1),
                           cfg);
}

double evaluate_model(const embed::EmbeddingModel& model, const corpus::StoredCorpus& corpus,
                      const CurriculumConfig& cfg) {
  if (corpus.ground_truth.empty()) return 0.0;
  std::map<std::string, embed::DescriptorSeq> full;
  {
    std::vector<embed::DescriptorSeq> seqs(corpus.journeys.size());
    parallel_for(seqs.size(), [&](std::size_t i) { seqs[i] = embed::embed_sequence(model, corpus.journeys[i].frames, 1); });
    for (std::size_t i = 0; i < seqs.size(); ++i) full[corpus.journeys[i].id] = std::move(seqs[i]);
  }
  std::vector<double> hit(corpus.ground_truth.size(), 0.0);
  parallel_for(hit.size(), [&](std::size_t i) {
    const auto& gt = corpus.ground_truth[i];
    const auto a = full.find(gt.journey_a), b = full.find(gt.journey_b);
    if (a == full.end() || b == full.end()) throw DataError("ground truth references unknown journey");
    const auto aligned = align_descriptors(a->second, b->second, cfg);
    if (!aligned.tour.empty()) hit[i] = eval::evaluate(aligned.fine.pairs, gt, cfg.eval_tolerance).hit_rate;
  });
  double sum = 0.0;
  for (double h : hit) sum += h;
  return sum / static_cast<double>(hit.size());
}

CurriculumResult run_curriculum(const corpus::StoredCorpus& corpus, const CurriculumConfig& cfg,
                                const CurriculumHooks& hooks) {
  if (corpus.journeys.size() < 2) throw ArgumentError("curriculum needs at least two journeys");
  const std::size_t k = corpus.journeys.front().frames.cols();
  std::vector<std::string> ids;
  embed::FrameStore store;
  for (const auto& j : corpus.journeys) {
    if (j.frames.cols() != k) throw DataError("journey '" + j.id + "' has a different feature dimension");
    ids.push_back(j.id);
    store.add(j.id, &j.frames);
  }
  const std::size_t n = ids.size();
  const std::size_t budget = pair_budget(n, cfg.budget);

  CurriculumResult result;
  result.model = embed::make_model(k, cfg.hidden_dim, cfg.descriptor_dim, mix_seed(cfg.seed, 1));
  for (std::size_t it = 0; it <= cfg.iterations; ++it) {
    IterationReport rep;
    rep.iteration = it;
    std::vector<TripletLabel> labels;

    if (it == 0) {
      for (std::size_t j = 0; j < n; ++j) {
        auto l = sample_intra(ids[j], corpus.journeys[j].frames.rows(), cfg.intra_labels_per_journey,
                              cfg.intra_window, cfg.negative_gap, mix_seed(cfg.seed, 100 + j));
        labels.insert(labels.end(), l.begin(), l.end());
      }
      rep.labels_intra = labels.size();
    } else {
      std::vector<embed::DescriptorSeq> coarse(n);
      parallel_for(n, [&](std::size_t j) {
        coarse[j] = embed::embed_sequence(result.model, corpus.journeys[j].frames, cfg.stride);
      });
      auto slot = [&](const std::string& id) {
        return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
      };

      CollectionIndex index(ids);
      std::map<std::pair<std::string, std::string>, costmat::CostMatrix> matrices;
      auto matcher = [&](const std::string& x, const std::string& y) {
        auto c = costmat::build_cost_matrix(coarse[slot(x)], coarse[slot(y)]);
        auto tour = tour::find_tour(c, cfg.tour);
        matrices[{x, y}] = std::move(c);
        const bool ok = index.update(x, y, std::move(tour), cfg.min_coverage);
        rep.plan.push_back({x, y, ok});
        return ok;
      };
      const auto planned = plan_pairs(index, ids, budget, matcher, mix_seed(cfg.seed, 200 + it));
      rep.pairs_planned = planned.size();
      rep.tours_found = index.edges().size();
      rep.tours_accepted_fraction =
          planned.empty() ? 0.0 : static_cast<double>(rep.tours_found) / static_cast<double>(planned.size());

      auto harvest = [&](const MatchingTour& t, const costmat::CostMatrix& c, std::uint64_t seed, Wave wave) {
        auto fwd = sample_inter(t, c, cfg.inter_labels_per_tour, cfg.off_path_margin, seed, wave);
        auto bwd = sample_inter(t.transposed(), transposed(c), cfg.inter_labels_per_tour, cfg.off_path_margin,
                                mix_seed(seed, 1), wave);
        labels.insert(labels.end(), fwd.begin(), fwd.end());
        labels.insert(labels.end(), bwd.begin(), bwd.end());
        return fwd.size() + bwd.size();
      };
      for (std::size_t e = 0; e < index.edges().size(); ++e) {
        const auto& edge = index.edges()[e];
        rep.labels_inter += harvest(index.tours()[edge.tour], matrices.at({edge.x, edge.y}),
                                    mix_seed(cfg.seed, 10000 * it + e), Wave::Inter1);
      }
      if (it >= 2) {
        std::size_t composed = 0;
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = a + 1; b < n; ++b) {
            if (cfg.transitive_pairs > 0 && composed >= cfg.transitive_pairs) break;
            if (!index.same_class(ids[a], ids[b]) || index.direct_tour(ids[a], ids[b])) continue;
            const auto t = tour_via_index(index, ids[a], ids[b], cfg.tour.tolerance);
            if (!t || t->empty()) continue;
            ++composed;
            const auto c = costmat::build_cost_matrix(coarse[a], coarse[b]);
            rep.labels_transitive +=
                harvest(*t, c, mix_seed(cfg.seed, 20000 * it + a * n + b), Wave::Transitive2);
          }
        }
      }
    }

    if (!labels.empty()) {
      embed::TrainConfig tc = cfg.train;
      tc.seed = mix_seed(cfg.seed, 300 + it);
      const auto history = embed::train(result.model, labels, store, tc);
      rep.final_loss = history.empty() ? 0.0 : history.back();
    }
    rep.eval_offset_le4_fraction = evaluate_model(result.model, corpus, cfg);
    if (hooks.on_labels) hooks.on_labels(it, labels);
    if (hooks.on_report) hooks.on_report(rep);
    result.reports.push_back(rep);
  }
  return result;
}

// ---------------------------------------------------------------------------

void write_labels(const std::vector<TripletLabel>& labels, const std::string& path) {
  std::string text = std::string(kLabelHeader) + "\n";
  for (const auto& l : labels)
    text += std::to_string(static_cast<int>(l.wave)) + "," + l.anchor.journey + "," + std::to_string(l.anchor.frame) +
            "," + l.positive.journey + "," + std::to_string(l.positive.frame) + "," + l.negative.journey + "," +
            std::to_string(l.negative.frame) + "\n";
  io::write_text(path, text);
}

std::vector<TripletLabel> read_labels(const std::string& path) {
  const auto table = io::read_csv(path, kLabelHeader);
  std::vector<TripletLabel> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto wave = table.as_int(i, 0);
    if (wave < 0 || wave > 2) throw DataError(path + ": data row " + std::to_string(i + 1) + ": bad wave");
    auto frame = [&](std::size_t col) {
      const auto v = table.as_int(i, col);
      if (v < 0) throw DataError(path + ": data row " + std::to_string(i + 1) + ": negative frame");
      return static_cast<std::size_t>(v);
    };
    const auto& r = table.rows[i];
    out.push_back({{r[1], frame(2)}, {r[3], frame(4)}, {r[5], frame(6)}, static_cast<Wave>(wave)});
  }
  return out;
}

}  // namespace tsync::curriculum
