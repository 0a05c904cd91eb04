// Licensed under the Apache License 2.0 (see LICENSE file).

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "tsync/curriculum.hpp"
#include "tsync/errors.hpp"

using namespace tsync;
using namespace tsync::curriculum;

namespace {

std::size_t absdiff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

MatchingTour tour_of(std::vector<std::pair<std::size_t, std::size_t>> pairs, std::string x, std::string y,
                     std::size_t rows, std::size_t cols) {
  MatchingTour t;
  t.x_id = std::move(x);
  t.y_id = std::move(y);
  t.rows = rows;
  t.cols = cols;
  for (auto [r, c] : pairs) t.pairs.push_back({r, c, 1.0, 0});
  if (!t.pairs.empty()) t.covered_cols = t.pairs.back().col - t.pairs.front().col + 1;
  return t;
}

MatchingTour full_tour() { return tour_of({{0, 0}}, "", "", 1, 1); }

std::vector<std::pair<std::size_t, std::size_t>> random_staircase(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t r = rng() % 10, c = rng() % 10;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(r, c);
    const auto step = rng() % 3;
    r += step != 1;
    c += step != 0;
  }
  return out;
}

std::string route_of(const corpus::SyntheticCorpus& c, const std::string& id) {
  for (const auto& j : c.journeys)
    if (j.journey.id == id) return j.journey.route_id;
  return {};
}

CurriculumConfig small_config() {
  CurriculumConfig cfg;
  cfg.hidden_dim = 32;
  cfg.descriptor_dim = 16;
  cfg.iterations = 1;
  cfg.intra_labels_per_journey = 300;
  cfg.inter_labels_per_tour = 100;
  cfg.train.epochs = 3;
  cfg.train.batch_size = 32;
  return cfg;
}

}  // namespace

TEST_CASE("intra labels respect window and gap") {
  const auto labels = sample_intra("j", 2000, 500, 15, 150, 9);
  REQUIRE(labels.size() == 500);
  std::set<std::size_t> anchors;
  for (const auto& l : labels) {
    CHECK(l.wave == Wave::Intra0);
    CHECK(l.anchor.journey == "j");
    CHECK(l.anchor.frame < 2000);
    CHECK(l.negative.frame < 2000);
    CHECK(l.anchor.frame != l.positive.frame);
    CHECK(absdiff(l.anchor.frame, l.positive.frame) <= 15);
    CHECK(absdiff(l.anchor.frame, l.negative.frame) >= 150);
    anchors.insert(l.anchor.frame);
  }
  CHECK(anchors.size() > 400);
  CHECK(sample_intra("j", 2000, 500, 15, 150, 9) == labels);
  CHECK(sample_intra("j", 2000, 500, 15, 150, 10) != labels);
  CHECK_THROWS_AS(sample_intra("j", 300, 5, 15, 150, 1), DataError);
  CHECK_NOTHROW(sample_intra("j", 301, 5, 15, 150, 1));
  CHECK_THROWS_AS(sample_intra("j", 2000, 5, 15, 15, 1), ArgumentError);
}

TEST_CASE("inter labels: margin, decoy column and capped output") {
  MatrixD m(100, 100, 1.0);
  for (std::size_t i = 0; i < 100; ++i) m(i, i) = 0.0;
  for (std::size_t i = 0; i < 100; ++i) m(i, 70) = std::min(m(i, 70), 0.1);
  const costmat::CostMatrix c{m, 10, false};
  std::vector<std::pair<std::size_t, std::size_t>> diag;
  for (std::size_t i = 0; i < 100; ++i) diag.emplace_back(i, i);
  auto t = tour_of(diag, "x", "y", 100, 100);
  t.stride = 10;

  const auto labels = sample_inter(t, c, 1000, 18, 3);
  REQUIRE(labels.size() == 100);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto& l = labels[k];
    const std::size_t row = l.anchor.frame / 10, neg = l.negative.frame / 10;
    CHECK(l.anchor.journey == "x");
    CHECK(l.negative.journey == "y");
    CHECK(l.positive.frame == l.anchor.frame);
    CHECK(absdiff(neg, row) >= 18);
    // Argmin over the columns far enough from the path.
    std::size_t want = 100;
    for (std::size_t col = 0; col < 100; ++col)
      if (absdiff(col, row) >= 18 && (want == 100 || m(row, col) < m(row, want))) want = col;
    CHECK(neg == want);
    if (absdiff(row, 70) >= 18) CHECK(neg == 70);
  }

  const auto few = sample_inter(t, c, 10, 18, 3);
  CHECK(few.size() == 10);
  CHECK(sample_inter(t, c, 10, 18, 3) == few);
  CHECK(sample_inter(MatchingTour{}, c, 10, 18, 3).empty());
}

TEST_CASE("composition of simple tours") {
  std::vector<std::pair<std::size_t, std::size_t>> id;
  for (std::size_t i = 0; i < 40; ++i) id.emplace_back(i, i);
  const auto composed = compose_tours(tour_of(id, "x", "v", 40, 40), tour_of(id, "v", "y", 40, 40), 6);
  REQUIRE(composed.pairs.size() == 40);
  for (std::size_t i = 0; i < 40; ++i) CHECK((composed.pairs[i].row == i && composed.pairs[i].col == i));
  CHECK(composed.x_id == "x");
  CHECK(composed.y_id == "y");

  // t -> 2t through v -> v + 5; brute-force nearest middle node.
  std::vector<std::pair<std::size_t, std::size_t>> dbl, shift;
  for (std::size_t t = 0; t < 50; ++t) dbl.emplace_back(t, 2 * t);
  for (std::size_t v = 0; v < 100; ++v) shift.emplace_back(v, v + 5);
  const auto c2 = compose_tours(tour_of(dbl, "x", "v", 50, 100), tour_of(shift, "v", "y", 100, 105), 6);
  REQUIRE(c2.pairs.size() == 50);
  for (std::size_t t = 0; t < 50; ++t) {
    CHECK(c2.pairs[t].row == t);
    CHECK(absdiff(c2.pairs[t].col, 2 * t + 5) <= 6);
    CHECK(c2.pairs[t].col == 2 * t + 5);
  }

  std::vector<std::pair<std::size_t, std::size_t>> early, late;
  for (std::size_t i = 0; i < 20; ++i) early.emplace_back(i, i), late.emplace_back(i + 50, i);
  CHECK(compose_tours(tour_of(early, "x", "v", 80, 80), tour_of(late, "v", "y", 80, 80), 6).empty());
  CHECK_THROWS_AS(compose_tours(tour_of(early, "x", "v", 80, 80), tour_of(early, "w", "y", 80, 80), 6),
                  ArgumentError);
}

TEST_CASE("composition agrees with a brute-force oracle and stays monotone") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto xv = tour_of(random_staircase(rng, 5 + rng() % 60), "x", "v", 200, 200);
    const auto vy = tour_of(random_staircase(rng, 5 + rng() % 60), "v", "y", 200, 200);
    const std::size_t tol = rng() % 5;
    const auto out = compose_tours(xv, vy, tol);

    // Oracle: nearest v' (ties to lower y), then greedy monotone filter.
    std::vector<std::pair<std::size_t, std::size_t>> want;
    for (const auto& p : xv.pairs) {
      const tour::TourPair* best = nullptr;
      for (const auto& q : vy.pairs) {
        if (absdiff(q.row, p.col) > tol) continue;
        if (!best || absdiff(q.row, p.col) < absdiff(best->row, p.col) ||
            (absdiff(q.row, p.col) == absdiff(best->row, p.col) && q.col < best->col))
          best = &q;
      }
      if (!best) continue;
      if (!want.empty() && (p.row < want.back().first || best->col < want.back().second)) continue;
      want.emplace_back(p.row, best->col);
    }
    REQUIRE(out.pairs.size() == want.size());
    std::set<std::size_t> xs;
    for (const auto& p : xv.pairs) xs.insert(p.row);
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(out.pairs[k].row == want[k].first);
      CHECK(out.pairs[k].col == want[k].second);
      CHECK(xs.contains(out.pairs[k].row));
      if (k > 0) {
        CHECK(out.pairs[k].row >= out.pairs[k - 1].row);
        CHECK(out.pairs[k].col >= out.pairs[k - 1].col);
      }
    }
  }
}

TEST_CASE("collection index classes") {
  CollectionIndex idx({"A", "B", "C", "D"});
  CHECK(idx.class_count() == 4);
  CHECK_FALSE(idx.update("A", "B", MatchingTour{}, 0.5));
  CHECK(idx.class_count() == 4);
  CHECK(idx.edges().empty());

  CHECK(idx.update("A", "B", full_tour(), 0.5));
  CHECK(idx.same_class("A", "B"));
  CHECK(idx.classes() == std::vector<std::vector<std::string>>{{"A", "B"}, {"C"}, {"D"}});

  CHECK(idx.update("B", "C", full_tour(), 0.5));
  CHECK(idx.classes() == std::vector<std::vector<std::string>>{{"A", "B", "C"}, {"D"}});
  CHECK(idx.same_class("A", "C"));
  CHECK_FALSE(idx.direct_tour("A", "C"));
  CHECK(idx.path("A", "C") == std::vector<std::string>{"A", "B", "C"});
  CHECK(idx.path("A", "D").empty());

  // Coverage below the threshold is not an edge.
  auto thin = tour_of({{0, 0}}, "", "", 10, 10);
  CHECK_FALSE(idx.update("C", "D", thin, 0.5));
  CHECK_THROWS_AS(idx.update("C", "Z", full_tour(), 0.5), ArgumentError);
}

TEST_CASE("collection index stays a partition under random unions") {
  std::mt19937_64 rng(2);
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) ids.push_back("j" + std::to_string(i));
  CollectionIndex idx(ids);
  std::size_t before = idx.class_count();
  for (int step = 0; step < 60; ++step) {
    const auto& a = ids[rng() % ids.size()];
    const auto& b = ids[rng() % ids.size()];
    const bool together = idx.same_class(a, b);
    idx.update(a, b, full_tour(), 0.5);
    const auto classes = idx.classes();
    std::multiset<std::string> seen;
    for (const auto& c : classes) seen.insert(c.begin(), c.end());
    CHECK(seen == std::multiset<std::string>(ids.begin(), ids.end()));
    CHECK(classes.size() == idx.class_count());
    CHECK(idx.class_count() == before - (together ? 0 : 1));
    before = idx.class_count();
    for (const auto& e : idx.edges()) CHECK(idx.same_class(e.x, e.y));
  }
}

TEST_CASE("pair planning simulations") {
  CHECK(pair_budget(1, 0) == 0);
  CHECK(pair_budget(2, 0) == 2);
  CHECK(pair_budget(5, 0) == 15);
  CHECK(pair_budget(8, 0) == 24);
  CHECK(pair_budget(8, 7) == 7);

  for (std::size_t n : {2, 3, 5, 8, 17, 40}) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("j" + std::to_string(i));
    CollectionIndex idx(ids);
    auto always = [&](const std::string& x, const std::string& y) { return idx.update(x, y, full_tour(), 0.5); };
    const auto plan = plan_pairs(idx, ids, pair_budget(n, 0), always, 1);
    CHECK(plan.size() <= pair_budget(n, 0));
    CHECK(idx.class_count() == 1);
  }

  // Two routes: even and odd journeys.
  std::vector<std::string> ids;
  for (int i = 0; i < 12; ++i) ids.push_back("j" + std::to_string(i));
  CollectionIndex idx(ids);
  auto route = [](const std::string& id) { return std::stoi(id.substr(1)) % 2; };
  auto same_route = [&](const std::string& x, const std::string& y) {
    return route(x) == route(y) && idx.update(x, y, full_tour(), 0.5);
  };
  const auto plan = plan_pairs(idx, ids, pair_budget(12, 0), same_route, 4);
  CHECK(plan.size() <= pair_budget(12, 0));
  CHECK(idx.class_count() == 2);

  CollectionIndex one({"only"});
  CHECK(plan_pairs(one, {"only"}, pair_budget(1, 0), [](auto&, auto&) { return true; }, 1).empty());
}

TEST_CASE("curriculum with no inter iterations trains once") {
  auto p = testing::clean_params();
  p.n_routes = 1;
  p.journeys_per_route = 2;
  p.frames_per_journey = 800;
  const auto stored = corpus::to_stored(corpus::generate_corpus(p));
  auto cfg = small_config();
  cfg.iterations = 0;
  std::vector<std::size_t> label_counts;
  CurriculumHooks hooks;
  hooks.on_labels = [&](std::size_t, const std::vector<TripletLabel>& l) { label_counts.push_back(l.size()); };
  const auto result = run_curriculum(stored, cfg, hooks);
  REQUIRE(result.reports.size() == 1);
  const auto& r = result.reports[0];
  CHECK(r.labels_intra == 600);
  CHECK(r.labels_inter == 0);
  CHECK(r.pairs_planned == 0);
  CHECK(label_counts == std::vector<std::size_t>{600});
  CHECK(r.eval_offset_le4_fraction >= 0.0);
  CHECK(r.eval_offset_le4_fraction <= 1.0);

  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["iteration"] == 0);
  CHECK(j["labels_produced"]["intra"] == 600);
  for (const char* key : {"pairs_planned", "tours_found", "tours_accepted_fraction", "eval_offset_le4_fraction",
                          "final_loss"})
    CHECK(j.contains(key));

  // Same seeds, same model.
  const auto again = run_curriculum(stored, cfg);
  CHECK(again.model.layers[0].weights == result.model.layers[0].weights);
}

TEST_CASE("zero-corruption corpus: every planned same-route pair yields a tour") {
  auto p = testing::clean_params();
  p.n_routes = 2;
  p.journeys_per_route = 3;
  p.frames_per_journey = 1500;
  p.route_length = 200;
  const auto synthetic = corpus::generate_corpus(p);
  const auto stored = corpus::to_stored(synthetic);
  auto cfg = small_config();
  std::vector<std::vector<TripletLabel>> labels;
  CurriculumHooks hooks;
  hooks.on_labels = [&](std::size_t, const std::vector<TripletLabel>& l) { labels.push_back(l); };
  const auto result = run_curriculum(stored, cfg, hooks);
  REQUIRE(result.reports.size() == 2);
  const auto& r1 = result.reports[1];
  REQUIRE_FALSE(r1.plan.empty());
  CHECK(r1.plan.size() == r1.pairs_planned);
  CHECK(r1.plan.size() <= pair_budget(6, 0));
  std::size_t accepted = 0;
  for (const auto& pp : r1.plan) {
    CAPTURE(pp.x);
    CAPTURE(pp.y);
    CHECK(pp.accepted == (route_of(synthetic, pp.x) == route_of(synthetic, pp.y)));
    accepted += pp.accepted;
  }
  CHECK(r1.tours_found == accepted);
  CHECK(r1.labels_inter > 0);
  CHECK(r1.labels_intra == 0);

  // Every label keeps its wave's constraints.
  for (const auto& l : labels[0]) {
    CHECK(absdiff(l.anchor.frame, l.positive.frame) <= cfg.intra_window);
    CHECK(absdiff(l.anchor.frame, l.negative.frame) >= cfg.negative_gap);
  }
  for (const auto& l : labels[1]) {
    CHECK(l.wave == Wave::Inter1);
    CHECK(l.anchor.journey != l.positive.journey);
    CHECK(l.positive.journey == l.negative.journey);
    CHECK(l.anchor.frame % cfg.stride == 0);
  }
}

TEST_CASE("label files round-trip byte for byte") {
  testing::TempDir dir("labels");
  auto labels = sample_intra("j01", 500, 40, 15, 150, 5);
  labels.push_back({{"j01", 10}, {"j02", 20}, {"j02", 400}, Wave::Inter1});
  labels.push_back({{"j01", 30}, {"j03", 50}, {"j03", 300}, Wave::Transitive2});
  write_labels(labels, dir.file("a.csv"));
  CHECK(read_labels(dir.file("a.csv")) == labels);
  write_labels(read_labels(dir.file("a.csv")), dir.file("b.csv"));
  CHECK(testing::read_bytes(dir.file("a.csv")) == testing::read_bytes(dir.file("b.csv")));
}
