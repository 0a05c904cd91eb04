// Licensed under the Apache License 2.0 (see LICENSE file).

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tsync/costmat.hpp"
#include "tsync/errors.hpp"
#include "tsync/svd.hpp"

using namespace tsync;
using namespace tsync::costmat;

namespace {

Eigen::MatrixXd to_eigen(const MatrixD& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

embed::DescriptorSeq seq_of(std::vector<std::vector<float>> rows) {
  embed::DescriptorSeq s{MatrixF(rows.size(), rows[0].size()), 1};
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) s.values(i, c) = rows[i][c];
  return s;
}

double residual_norm(const Eigen::VectorXd& sigma, std::size_t r) {
  double s = 0.0;
  for (Eigen::Index k = static_cast<Eigen::Index>(r); k < sigma.size(); ++k) s += sigma[k] * sigma[k];
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("cost matrix entries") {
  const auto x = seq_of({{1, 0}, {0, 1}, {0.6f, 0.8f}});
  const auto c = build_cost_matrix(x, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(c(i, i) == 0.0);
  CHECK(c(0, 1) == doctest::Approx(std::sqrt(2.0)));

  const auto one = build_cost_matrix(seq_of({{1, 0}}), seq_of({{0, 1}}));
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 1);
  CHECK(one(0, 0) == doctest::Approx(std::sqrt(2.0)));

  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  embed::DescriptorSeq a{MatrixF(5, 4), 1}, b{MatrixF(7, 4), 1};
  for (auto* s : {&a, &b})
    for (std::size_t i = 0; i < s->size(); ++i)
      for (std::size_t k = 0; k < 4; ++k) s->values(i, k) = g(rng);
  const auto m = build_cost_matrix(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += std::pow(double(a.values(i, k)) - b.values(j, k), 2);
      CHECK(m(i, j) == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
    }

  embed::DescriptorSeq strided{MatrixF(2, 4), 2};
  CHECK_THROWS_AS(build_cost_matrix(a, strided), ArgumentError);
}

TEST_CASE("Jacobi SVD agrees with an independent SVD") {
  std::mt19937_64 rng(17);
  for (auto [r, c] : {std::pair{6, 4}, {4, 6}, {10, 10}, {1, 5}, {30, 12}}) {
    const auto a = testing::random_matrix(r, c, rng, -1, 1);
    const auto svd = linalg::jacobi_svd(a);
    Eigen::JacobiSVD<Eigen::MatrixXd> ref(to_eigen(a));
    REQUIRE(svd.sigma.size() == static_cast<std::size_t>(ref.singularValues().size()));
    for (std::size_t k = 0; k < svd.sigma.size(); ++k)
      CHECK(svd.sigma[k] == doctest::Approx(ref.singularValues()[k]).epsilon(1e-10));
    // U diag(sigma) V^T reconstructs A.
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) {
        double s = 0;
        for (std::size_t k = 0; k < svd.sigma.size(); ++k) s += svd.u(i, k) * svd.sigma[k] * svd.v(j, k);
        CHECK(std::abs(s - a(i, j)) <= 1e-10);
      }
  }
}

TEST_CASE("decorrelation removes the leading singular directions") {
  std::mt19937_64 rng(4);
  const CostMatrix c{testing::random_matrix(6, 4, rng), 1, false};
  const auto d = decorrelate(c, 2);
  CHECK(d.decorrelated);
  Eigen::JacobiSVD<Eigen::MatrixXd> ref(to_eigen(c.values));
  CHECK(frobenius_norm(d.values) == doctest::Approx(residual_norm(ref.singularValues(), 2)).epsilon(1e-6));

  const auto same = decorrelate(c, 0);
  CHECK(same.values == c.values);
  CHECK_THROWS_AS(decorrelate(d, 1), ArgumentError);
  CHECK_THROWS_AS(decorrelate(c, 5), ArgumentError);

  MatrixD outer(5, 8);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 8; ++j) outer(i, j) = (1.0 + i) * (0.5 + 0.25 * j);
  for (std::size_t r : {1, 3}) {
    const auto z = decorrelate({outer, 1, false}, r);
    for (double v : z.values.data()) CHECK(std::abs(v) <= 1e-6);
  }
}

TEST_CASE("zero-noise ground-truth path is cheaper than the matrix mean") {
  auto p = testing::clean_params();
  p.n_routes = 1;
  p.journeys_per_route = 2;
  p.frames_per_journey = 600;
  p.route_length = 100;
  const auto corpus = corpus::generate_corpus(p);
  const auto model = embed::identity_model(p.feature_dim);
  const auto dx = embed::embed_sequence(model, corpus.journeys[0].frames, 1);
  const auto dy = embed::embed_sequence(model, corpus.journeys[1].frames, 1);
  const auto c = build_cost_matrix(dx, dy);
  double path = 0, all = 0;
  for (const auto& [a, b] : corpus.ground_truth.at(0).pairs) path += c(a, b);
  for (double v : c.values.data()) all += v;
  CHECK(path / corpus.ground_truth[0].pairs.size() < all / c.values.data().size());
}

TEST_CASE("matrix files round-trip and PGM has the matrix shape") {
  testing::TempDir dir("matrix");
  std::mt19937_64 rng(8);
  const CostMatrix c{testing::random_matrix(4, 9, rng, -2, 2), 10, true};
  write_matrix(c, dir.file("a.tscm"));
  const auto back = read_matrix(dir.file("a.tscm"));
  CHECK(back.rows() == 4);
  CHECK(back.cols() == 9);
  CHECK(back.stride == 10);
  CHECK(back.decorrelated);
  for (std::size_t i = 0; i < c.values.data().size(); ++i)
    CHECK(back.values.data()[i] == static_cast<double>(static_cast<float>(c.values.data()[i])));
  write_matrix(back, dir.file("b.tscm"));
  CHECK(testing::read_bytes(dir.file("a.tscm")) == testing::read_bytes(dir.file("b.tscm")));

  write_pgm(c, dir.file("m.pgm"));
  const auto pgm = testing::read_bytes(dir.file("m.pgm"));
  const std::string header = "P5\n9 4\n255\n";
  CHECK(pgm.substr(0, header.size()) == header);
  CHECK(pgm.size() == header.size() + 36);
}
