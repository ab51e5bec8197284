#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "hclab/geometry.hpp"

using namespace hclab;

TEST_CASE("rho of the hand instance is one half") {
  PrototypeSet p;
  p.mu = Matrix{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
  p.species_ids = {0, 1};
  VariationMatrix d;
  d.d = Matrix{{1.0}, {0.0}, {1.0}};
  d.axis = "a";
  CHECK(std::abs(explained_variance_ratio(p, d) - 0.5) < 1e-15);
  d.d = Matrix{{0.0}, {0.0}, {2.0}};
  CHECK(explained_variance_ratio(p, d) == doctest::Approx(0.0));
  d.d = Matrix{{0.0}, {0.0}, {0.0}};
  CHECK_THROWS_AS(explained_variance_ratio(p, d), Error);
}

TEST_CASE("fdr of the one-dimensional instance") {
  const auto r = fdr(Matrix{{0.0}, {2.0}}, Matrix{{4.0}, {6.0}});
  CHECK(r.numerator == 16.0);
  CHECK(r.denominator == 2.0);
  CHECK(r.ratio == 8.0);
  CHECK_THROWS_AS(fdr(Matrix{{1.0}}, Matrix{{1.0}}), Error);
  CHECK_THROWS_AS(fdr(Matrix(0, 1), Matrix{{1.0}}), Error);
}

TEST_CASE("variation columns and empirical prototypes") {
  const Matrix e{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {3.0, 1.0}, {5.0, 5.0}};
  const std::vector<std::size_t> sid{0, 0, 1, 1, 2};
  const auto v = variation_diffs(e, sid, {0, 1, 0, 1, 0}, "ax");
  REQUIRE(v.d.cols() == 2);
  CHECK(v.d(0, 0) == 1.0);
  CHECK(v.d(1, 0) == -1.0);
  CHECK(v.d(0, 1) == -2.0);
  CHECK(v.skipped_species == std::vector<std::size_t>{2});
  const auto p = empirical_prototypes(e, sid);
  CHECK(p.species_ids == std::vector<std::size_t>{0, 1, 2});
  CHECK(p.mu(0, 0) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("taylor terms are consistent with the exact loss") {
  Rng rng(4);
  PrototypeSet p;
  p.mu = Matrix::gaussian(5, 8, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto n = normalized(p.mu.row(i));
    std::copy(n.begin(), n.end(), p.mu.row(i).begin());
  }
  const double tau = 0.3;
  std::vector<double> dir(8);
  for (auto& x : dir) x = rng.gaussian();
  double prev = 0.0;
  for (double t : {1e-1, 5e-2, 2.5e-2}) {
    std::vector<double> delta(dir);
    for (auto& x : delta) x *= t;
    const auto ta = taylor_analysis(p, 2, delta, tau);
    std::vector<double> z(p.mu.row(2).begin(), p.mu.row(2).end());
    for (std::size_t k = 0; k < 8; ++k) z[k] += delta[k];
    CHECK(ta.exact_delta == doctest::Approx(prototype_loss(p.mu, 2, z, tau) - prototype_loss(p.mu, 2, p.mu.row(2), tau)));
    CHECK(ta.remainder == doctest::Approx(ta.exact_delta - ta.first_order - ta.quadratic));
    double ws = 0.0;
    for (double w : ta.w) ws += w;
    CHECK(ws == doctest::Approx(1.0));
    // Remainder is third order: halving t divides it by about eight.
    if (prev != 0.0) CHECK(std::abs(prev / ta.remainder) == doctest::Approx(8.0).epsilon(0.1));
    prev = ta.remainder;
  }
}

TEST_CASE("species plane is orthonormal and centred") {
  Rng rng(8);
  const Matrix e = Matrix::gaussian(30, 6, rng);
  std::vector<std::size_t> sid(30);
  std::vector<int> val(30);
  for (std::size_t i = 0; i < 30; ++i) {
    sid[i] = i % 4;
    val[i] = static_cast<int>((i / 4) % 2);
  }
  const auto sp = species_plane_projection(e, sid, {{"ax", val}});
  CHECK(sp.coords.rows() == 30);
  CHECK(sp.species_coords.rows() == 4);
  CHECK(dot(sp.plane.row(0), sp.plane.row(1)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(norm2(sp.plane.row(0)) == doctest::Approx(1.0));
  CHECK(dot(sp.normal, sp.plane.row(0)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sp.arrows.size() == 4);
}

TEST_CASE("geometry report on an untrained model") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  ModelConfig mc;
  mc.d_emb = 12;
  const auto m = init_model(1, mc, ds);
  const auto r = geometry_report(m, ds);
  REQUIRE(r.axes.size() == 2);
  for (const auto& a : r.axes) {
    REQUIRE(a.rho_empirical.has_value());
    CHECK(*a.rho_empirical >= 0.0);
    CHECK(*a.rho_empirical <= 1.0);
    CHECK(a.fdr.has_value());
  }
  CHECK(r.empirical.mu.rows() == 8);
}
