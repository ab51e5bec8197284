#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "hclab/eval.hpp"
#include "oracles.hpp"

using namespace hclab;


TEST_CASE("clustering accuracy equals the exhaustive optimum") {
  Rng rng(13);
  for (int t = 0; t < 40; ++t) {
    const std::size_t k = 3 + rng.index(4), known = 1 + rng.index(2);
    const std::size_t n = 5 + rng.index(20);
    std::vector<std::size_t> cl(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      cl[i] = rng.index(k);
      truth[i] = rng.index(k);
    }
    std::vector<std::size_t> known_classes(known);
    std::iota(known_classes.begin(), known_classes.end(), 0);
    CHECK(clustering_accuracy(cl, truth, known_classes, k) == doctest::Approx(oracles::brute_accuracy(cl, truth, known, k)));
  }
}

TEST_CASE("zero-shot nearest prototype with lowest-index ties") {
  PrototypeSet p;
  p.mu = Matrix{{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
  p.species_ids = {0, 1, 2};
  const Matrix e{{0.9, 0.1}, {0.2, 0.8}, {1.0, 0.0}};
  const auto r = zero_shot_ncc(e, {0, 1, 2}, p);
  CHECK(r.n == 3);
  CHECK(r.correct == 2);
  CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("probes and simpleshot separate clean clusters") {
  Rng rng(6);
  Matrix tr(60, 3), te(30, 3);
  std::vector<std::size_t> ytr(60), yte(30);
  auto fill = [&](Matrix& m, std::vector<std::size_t>& y) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      y[i] = i % 3;
      for (std::size_t j = 0; j < 3; ++j) m(i, j) = (j == y[i] ? 3.0 : 0.0) + 0.1 * rng.gaussian();
    }
  };
  fill(tr, ytr);
  fill(te, yte);
  CHECK(linear_probe(tr, ytr, te, yte, ProbeConfig{}).accuracy == 1.0);
  ProbeConfig mlp;
  mlp.hidden = 8;
  CHECK(linear_probe(tr, ytr, te, yte, mlp).accuracy == 1.0);
  CHECK(simpleshot(tr, ytr, te, yte, 5, 1).accuracy == 1.0);
  CHECK_THROWS_AS(linear_probe(tr, std::vector<std::size_t>(60, 1), te, yte, ProbeConfig{}), Error);
  const auto km = ssl_kmeans(tr, ytr, te, yte, 3, 1);
  CHECK(km.report.accuracy == 1.0);
}
