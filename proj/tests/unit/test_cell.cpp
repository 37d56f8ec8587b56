#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "homlab/cell.hpp"
#include "homlab/errors.hpp"

using namespace homlab;

namespace {

TemplateDef laminate(double a0, double a1, int dim = 2) {
  TemplateDef t;
  t.kind = TemplateDef::Kind::laminate;
  t.dim = dim;
  t.axis = 0;
  t.pieces = {SymMat::identity(dim, a0), SymMat::identity(dim, a1)};
  return t;
}

TemplateDef identity(int dim = 2) {
  TemplateDef t;
  t.dim = dim;
  t.matrix = SymMat::identity(dim);
  return t;
}

TemplateDef smooth() {
  TemplateDef t;
  t.kind = TemplateDef::Kind::smooth;
  t.mean = 0.6;
  t.amplitude = 0.3;
  return t;
}

CorrectorSet solve(const TemplateDef& t, int res) {
  CellOptions o;
  o.resolution = res;
  return solve_cell({"t", t}, o);
}

double min_eig_gap(const SymMat& hi, const SymMat& lo) { return (hi - lo).min_eigenvalue(); }

}  // namespace

TEST_CASE("identity template has zero correctors and Abar = Id") {
  const CorrectorSet c = solve(identity(), 32);
  CHECK(c.abar == SymMat::identity(2));
  for (int i = 0; i < 2; ++i) {
    CHECK(c.diagnostics.phi_sup[i] == 0.0);
    CHECK(c.diagnostics.sigma_sup[i] == 0.0);
    CHECK(c.diagnostics.phi_energy[i] == 0.0);
    for (double v : c.q[i].values) CHECK(v == 0.0);
  }
}

TEST_CASE("identity template through the iterative path gives zero correctors") {
  TemplateDef t = laminate(1.0, 1.0);
  const CorrectorSet c = solve(t, 32);
  for (int i = 0; i < 2; ++i) CHECK(c.diagnostics.phi_sup[i] < 1e-12);
  CHECK(c.abar(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(c.abar(0, 1)) < 1e-12);
}

TEST_CASE("laminate {1,3}: correctors, homogenized matrix and fluxes") {
  const CorrectorSet c = solve(laminate(1.0, 3.0), 128);
  const Grid& g = c.a_per.grid();
  SUBCASE("Abar = diag(1.5, 2.0)") {
    CHECK(c.abar(0, 0) == doctest::Approx(1.5).epsilon(1e-10));
    CHECK(c.abar(1, 1) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(std::abs(c.abar(0, 1)) < 1e-10);
  }
  SUBCASE("phi^1 depends on y1 only with d1 phi^1 = abar / a - 1") {
    const VectorField gr = gradient(c.phi[0]);
    for (std::size_t cc = 0; cc < g.num_cells(); ++cc) {
      const double a = c.a_per.at(cc)(0, 0);
      CHECK(gr.at(cc)[0] == doctest::Approx(1.5 / a - 1.0).epsilon(1e-8));
      CHECK(std::abs(gr.at(cc)[1]) < 1e-9);
    }
    CHECK(c.diagnostics.grad_phi_sup[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(c.diagnostics.phi_energy[0] == doctest::Approx(0.25).epsilon(1e-8));
  }
  SUBCASE("phi^2 vanishes") { CHECK(c.diagnostics.phi_sup[1] < 1e-10); }
  SUBCASE("q^1 = 0 and q^2 = (0, a - 2)") {
    for (std::size_t cc = 0; cc < g.num_cells(); ++cc) {
      const double a = c.a_per.at(cc)(0, 0);
      CHECK(std::abs(c.q[0].at(cc)[0]) < 1e-8);
      CHECK(std::abs(c.q[0].at(cc)[1]) < 1e-8);
      CHECK(std::abs(c.q[1].at(cc)[0]) < 1e-8);
      CHECK(c.q[1].at(cc)[1] == doctest::Approx(a - 2.0).epsilon(1e-8));
    }
  }
  SUBCASE("div sigma^2 = q^2 with d1 sigma^{2,12} = -q^{2,2}") {
    CHECK(c.diagnostics.div_residual[1] < 1e-8);
    const VectorField gs = gradient(c.sigma[1][0]);
    for (std::size_t cc = 0; cc < g.num_cells(); cc += 7)
      CHECK(gs.at(cc)[0] == doctest::Approx(-c.q[1].at(cc)[1]).epsilon(1e-6));
  }
  SUBCASE("stored sigma is skew by construction") {
    for (std::size_t n = 0; n < g.num_nodes(); n += 13) {
      CHECK(c.sigma_entry(1, 0, 1, n) == -c.sigma_entry(1, 1, 0, n));
      CHECK(c.sigma_entry(1, 0, 0, n) == 0.0);
    }
  }
}

TEST_CASE("1-D laminate {1, 1/2} has harmonic mean 2/3") {
  const CorrectorSet c = solve(laminate(1.0, 0.5), 64);
  CHECK(c.abar(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
  CHECK(c.abar(1, 1) == doctest::Approx(0.75).epsilon(1e-10));
}

TEST_CASE("pair storage conventions") {
  CHECK(pair_index(2, 0, 1) == 0);
  CHECK(pair_index(2, 1, 0) == 0);
  CHECK(pair_index(3, 0, 1) == 0);
  CHECK(pair_index(3, 0, 2) == 1);
  CHECK(pair_index(3, 1, 2) == 2);
  CHECK(pair_index(3, 2, 1) == 2);
  CHECK(pair_sign(0, 2) == 1.0);
  CHECK(pair_sign(2, 0) == -1.0);
}

TEST_CASE("property: Voigt-Reuss bounds for random checkerboards") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TemplateDef t = random_checkerboard(2, 4, 0.2, 1.0, seed);
    const auto [lo, hi] = t.eigen_range();
    CHECK(lo >= 0.2 - 1e-12);
    CHECK(hi <= 1.0 + 1e-12);
    const CorrectorSet c = solve(t, 64);
    const SymMat harm = harmonic_mean(c.a_per), arith = arithmetic_mean(c.a_per);
    CHECK(min_eig_gap(c.abar, harm) >= -1e-8);
    CHECK(min_eig_gap(arith, c.abar) >= -1e-8);
    CHECK(c.diagnostics.abar_asymmetry <= 1e-8);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(c.diagnostics.phi_mean[i]) <= 1e-12);
  }
}

TEST_CASE("property: 3-D random template keeps symmetry, bounds and zero means") {
  const TemplateDef t = random_checkerboard(3, 2, 0.3, 1.0, 9);
  const CorrectorSet c = solve(t, 16);
  CHECK(c.diagnostics.abar_asymmetry <= 1e-8);
  CHECK(min_eig_gap(c.abar, harmonic_mean(c.a_per)) >= -1e-8);
  CHECK(min_eig_gap(arithmetic_mean(c.a_per), c.abar) >= -1e-8);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(c.diagnostics.phi_mean[i]) <= 1e-12);
  CHECK(c.sigma[0].size() == 3);
}

TEST_CASE("property: refinement of a smooth template") {
  const CorrectorSet c64 = solve(smooth(), 64), c128 = solve(smooth(), 128), c256 = solve(smooth(), 256);
  const double d1 = (c128.abar - c64.abar).max_abs_entry();
  const double d2 = (c256.abar - c128.abar).max_abs_entry();
  CHECK(d2 < d1);
  for (int i = 0; i < 2; ++i) {
    CHECK(c128.diagnostics.div_residual[i] <= 1e-3);
    CHECK(c256.diagnostics.div_residual[i] <= 0.5 * c128.diagnostics.div_residual[i]);
  }
}

TEST_CASE("property: the flux corrector bilinear form is antisymmetric") {
  const CorrectorSet c = solve(random_checkerboard(2, 4, 0.2, 1.0, 17), 32);
  const Grid& g = c.a_per.grid();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N;
  auto form = [&](int i, const ScalarField& w, const ScalarField& v) {
    // integral of sum_jk sigma^{ijk} d_k w d_j v
    const VectorField gw = gradient(w), gv = gradient(v);
    std::size_t nodes[4];
    double s = 0.0;
    for (std::size_t cc = 0; cc < g.num_cells(); ++cc) {
      g.cell_nodes(cc, nodes);
      double sig = 0.0;
      for (std::size_t n : nodes) sig += 0.25 * c.sigma_entry(i, 0, 1, n);
      s += sig * (gw.at(cc)[1] * gv.at(cc)[0] - gw.at(cc)[0] * gv.at(cc)[1]) * g.cell_volume();
    }
    return s;
  };
  for (int trial = 0; trial < 10; ++trial) {
    ScalarField w = ScalarField::nodal(g), v = ScalarField::nodal(g);
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      w[n] = N(rng);
      v[n] = N(rng);
    }
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(form(i, w, w)) <= 1e-12);
      CHECK(std::abs(form(i, w, v) + form(i, v, w)) <= 1e-12);
    }
  }
}

TEST_CASE("corrector sets round trip through the cache directory") {
  const auto dir = std::filesystem::temp_directory_path() / "homlab_test_cell";
  std::filesystem::remove_all(dir);
  const TemplateDef t = laminate(1.0, 3.0);
  const CorrectorSet c = solve(t, 32);
  save_corrector_set(c, dir);
  CHECK(std::filesystem::exists(dir / "Abar.json"));
  const CorrectorSet back = load_corrector_set(dir, t);
  CHECK(back.abar == c.abar);
  CHECK(back.phi[0].values == c.phi[0].values);
  CHECK(back.sigma[1][0].values == c.sigma[1][0].values);
  CHECK_THROWS_AS(load_corrector_set(dir, laminate(1.0, 2.0)), ConfigError);
  CHECK(cache_key(t, 32) != cache_key(t, 64));
  CHECK(cache_key(t, 32) == c.cache_key);
}

TEST_CASE("template kinds parse and reject unknown names") {
  CHECK(parse_template_kind("laminate") == TemplateDef::Kind::laminate);
  CHECK(to_string(TemplateDef::Kind::checkerboard) == "checkerboard");
  CHECK_THROWS_AS(parse_template_kind("fractal"), ConfigError);
}
