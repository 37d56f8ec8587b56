#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "homlab/analysis.hpp"
#include "homlab/errors.hpp"
#include "homlab/strip.hpp"

using namespace homlab;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

ScalarField nodal_of(const Grid& g, auto&& fn) {
  ScalarField u = ScalarField::nodal(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) u[n] = fn(g.node_point(n));
  return u;
}

// Laminate on one generation of boxes, resolved at 96 cells per unit.
struct Fixture {
  CoefficientSpec spec;
  WhitneyLayout layout;
  std::map<std::string, CorrectorSet> correctors;
  std::map<std::string, SymMat> abar;
  Grid grid;
  MatrixField A, Abar;
  BoundaryData bc;

  explicit Fixture(bool constant_template = false) {
    TemplateDef t;
    if (constant_template) {
      t.matrix = SymMat::identity(2, 0.7);
    } else {
      t.kind = TemplateDef::Kind::laminate;
      t.pieces = {SymMat::identity(2, 1.0 / 3.0), SymMat::identity(2, 1.0)};
    }
    spec.lambda = 1.0 / 3.0;
    spec.K = 1;
    spec.schedule.p = std::numeric_limits<double>::infinity();
    spec.templates["a"] = t;
    spec.assignment.first = "a";
    CellOptions co;
    co.resolution = 32;
    correctors.emplace("a", solve_cell({"a", t}, co));
    abar["a"] = correctors.at("a").abar;
    spec.A_inf = abar["a"];
    layout = make_layout(spec);
    grid = make_strip_grid(2, 1.0, 2.0, 96);
    A = assemble_A(spec, layout, grid, abar);
    Abar = assemble_Abar(spec, grid, abar);
    bc.f = [](const Vec& p) { return std::cos(kTwoPi * p[0]) + 0.3 * std::sin(2 * kTwoPi * p[0]); };
  }
  ExpansionContext ctx() const { return {&spec, &layout, &correctors}; }
};

}  // namespace

TEST_CASE("Carleson functional examples") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 32, false);
  CHECK(carleson_functional(ScalarField::nodal(g, 3.0), {{0.5}, 0.5}).raw == 0.0);
  const auto u = nodal_of(g, [](const Vec& p) { return p[0]; });
  for (double R : {0.25, 0.5, 1.0}) {
    const CarlesonValue v = carleson_functional(u, {{0.5}, R});
    CHECK(v.raw == doctest::Approx(R * R * R / 2).epsilon(1e-13));
    CHECK(v.normalized == doctest::Approx(R * R / 2).epsilon(1e-13));
  }
  const CarlesonValue clipped = carleson_functional(u, {{0.0}, 0.5});
  CHECK(clipped.clipped);
}

TEST_CASE("Carleson functional of the harmonic extension of cos 2 pi x") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 128);
  const MatrixField A(g, SymMat::identity(2));
  BoundaryData bc;
  bc.f = [](const Vec& p) { return std::cos(kTwoPi * p[0]); };
  const SolveReport r = dirichlet_solve(A, bc, {});
  // |grad u|^2 = 4 pi^2 e^{-4 pi t}; integral of t |grad u|^2 over (0,1) in t.
  const double a = 2 * kTwoPi;
  const double oracle = kTwoPi * kTwoPi * (1 - (1 + a) * std::exp(-a)) / (a * a);
  const CarlesonValue v = carleson_functional(r.u, {{0.5}, 1.0});
  CHECK(v.normalized == doctest::Approx(oracle).epsilon(0.01));
}

TEST_CASE("Carleson sup") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 32);
  const CarlesonReport zero = carleson_sup(ScalarField::nodal(g, 1.0), {0.25, 0.5, 1.0});
  CHECK(zero.sup == 0.0);
  for (const auto& row : zero.rows) CHECK(row.raw == 0.0);
  const auto u = nodal_of(g, [](const Vec& p) { return std::cos(kTwoPi * p[0]) * std::exp(-kTwoPi * p[1]); });
  const CarlesonReport one = carleson_sup(u, {0.5});
  double best = 0.0;
  for (const auto& row : one.rows) {
    CHECK(row.raw == carleson_functional(u, row.tent).raw);
    best = std::max(best, row.normalized);
  }
  CHECK(one.sup == best);
  CHECK(one.ratio == 1.0);
  CHECK(one.rows.size() == 4);
  const CarlesonReport banded = carleson_sup(u, {0.5}, 0.125);
  for (const auto& row : banded.rows) CHECK(row.sub_band > 0.0);
  for (const auto& row : banded.rows) CHECK(row.sub_band < row.raw);
}

TEST_CASE("property: tent integrals are monotone under nesting") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 64);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> N;
  ScalarField u = ScalarField::nodal(g);
  for (auto& v : u.values) v = N(rng);
  for (double x : {0.0, 0.3, 0.71}) {
    double prev = 0.0;
    for (double R = 1.0 / 64; R <= 1.0; R *= 1.5) {
      const double raw = carleson_functional(u, {{x}, R}).raw;
      CHECK(raw >= prev);
      prev = raw;
    }
  }
}

TEST_CASE("DKP oscillation") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 64);
  SUBCASE("constant field") {
    const MatrixField A(g, SymMat::identity(2, 0.5));
    CHECK(dkp_alpha(A, {0.5, 0.5, 0}) == 0.0);
    CHECK(dkp_carleson_integral(A, {{0.0}, 0.5}).total == 0.0);
  }
  SUBCASE("two values at operator distance 0.5") {
    MatrixField A(g);
    for (std::size_t c = 0; c < g.num_cells(); ++c)
      A.set(c, SymMat::identity(2, g.cell_center(c)[0] < 0.5 ? 1.0 : 0.5));
    CHECK(dkp_alpha(A, {0.5, 0.25, 0}) == doctest::Approx(0.5));
    CHECK(dkp_alpha(A, {0.25, 0.1, 0}) == 0.0);
    CHECK_THROWS_AS(dkp_alpha(A, {0.5, 3.0, 0}), ConfigError);
  }
  SUBCASE("alpha never exceeds 1 - lambda") {
    const double lambda = 0.25;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(lambda, 1.0);
    MatrixField A(g);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const double a = U(rng), b = U(rng);
      A.set(c, SymMat::diagonal(std::vector<double>{a, b}));
    }
    std::uniform_real_distribution<double> X(0.0, 1.0), T(0.02, 1.9);
    for (int i = 0; i < 50; ++i) {
      const double alpha = dkp_alpha(A, {X(rng), T(rng), 0});
      CHECK(alpha >= 0.0);
      CHECK(alpha <= 1.0 - lambda + 1e-12);
    }
  }
  SUBCASE("slabs add up and only the oscillating band contributes") {
    MatrixField A(g, SymMat::identity(2));
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const Vec p = g.cell_center(c);
      if (p[1] >= 0.5 && p[1] < 1.0) A.set(c, SymMat::identity(2, std::fmod(p[0] * 8, 1.0) < 0.5 ? 0.5 : 1.0));
    }
    const DkpReport r = dkp_carleson_integral(A, {{0.5}, 1.0});
    double sum = 0.0;
    for (const auto& s : r.slabs) {
      sum += s.value;
      if (s.k <= -3) CHECK(s.value == 0.0);
    }
    CHECK(r.total == sum);
    CHECK(r.generations(1).size() == 1);
    CHECK(r.generations(1)[0].k == -1);
    CHECK(r.generations(1)[0].value > 0.0);
  }
}

TEST_CASE("cell Hessian is exact on quadratics away from piece changes") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 16, false);
  const auto u = nodal_of(g, [](const Vec& p) { return p[0] * p[0] + 3 * p[0] * p[1] - p[1] * p[1]; });
  const MatrixField pieces(g, SymMat::identity(2));
  const auto H = cell_hessian(u, pieces);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    CHECK(H[c](0, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(H[c](0, 1) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(H[c](1, 1) == doctest::Approx(-2.0).epsilon(1e-9));
  }
}

TEST_CASE("two-scale expansion") {
  SUBCASE("constant templates leave ubar unchanged") {
    Fixture fx(true);
    const ScalarField ubar = dirichlet_solve(fx.Abar, fx.bc, {}).u;
    const ScalarField u2s = two_scale_expand(ubar, fx.ctx());
    CHECK(u2s.values == ubar.values);
  }
  Fixture fx;
  const ScalarField ubar = dirichlet_solve(fx.Abar, fx.bc, {}).u;
  const ScalarField u2s = two_scale_expand(ubar, fx.ctx());
  const Grid& g = fx.grid;
  SUBCASE("bottom trace is f and the expansion is inactive for t >= 1 and t < 1/2") {
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      const Vec p = g.node_point(n);
      if (p[1] == 0.0) CHECK(u2s[n] == fx.bc.f(p));
      if (p[1] >= 1.0 || p[1] <= 0.5) CHECK(u2s[n] == ubar[n]);
    }
  }
  SUBCASE("pointwise formula where the cutoff is one") {
    const auto grad = nodal_gradient(ubar);
    const CorrectorSet& cs = fx.correctors.at("a");
    std::vector<std::size_t> inside;
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      const Vec p = g.node_point(n);
      const WhitneyBox* b = fx.layout.locate(p);
      if (b && cutoff_value(*b, 2, 1.0, p) == 1.0) inside.push_back(n);
    }
    REQUIRE(inside.size() > 100);
    int checked = 0;
    for (std::size_t m = 0; m < 5; ++m) {
      const std::size_t n = inside[(2 * m + 1) * inside.size() / 10];
      const Vec p = g.node_point(n);
      const WhitneyBox* b = fx.layout.locate(p);
      const double period = b->side() * b->eps;
      const Vec y{p[0] / period, p[1] / period, 0};
      double expect = 0.0;
      for (int i = 0; i < 2; ++i) expect += interpolate(cs.phi[i], y) * grad[n][i];
      CHECK(std::abs(u2s[n] - ubar[n] - period * expect) <= 1e-14);
      ++checked;
    }
    CHECK(checked == 5);
  }
  SUBCASE("error equation with the expansion flux reproduces u - u2s") {
    const SolveReport u = dirichlet_solve(fx.A, fx.bc, {1e-12, 0, PreconditionerKind::spectral});
    const VectorField F = expansion_flux(fx.A, fx.Abar, u2s, ubar);
    const SolveReport z = solve_error_equation(fx.A, F, {1e-12, 0, PreconditionerKind::spectral});
    double diff = 0.0, norm = 0.0;
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      const double zs = u.u[n] - u2s[n];
      diff += (z.u[n] - zs) * (z.u[n] - zs);
      norm += zs * zs;
    }
    CHECK(std::sqrt(diff / norm) < 1e-6);
  }
}

TEST_CASE("error budget") {
  SUBCASE("constant coefficients give a zero budget") {
    Fixture fx(true);
    const ScalarField ubar = dirichlet_solve(fx.Abar, fx.bc, {}).u;
    const ScalarField u = dirichlet_solve(fx.A, fx.bc, {}).u;
    const ScalarField u2s = two_scale_expand(ubar, fx.ctx());
    const ErrorBudget eb = error_budget(u, ubar, u2s, fx.A, fx.Abar, fx.ctx(), {{0.5}, 1.0});
    CHECK(eb.bulk == 0.0);
    CHECK(eb.layer == 0.0);
    CHECK(eb.flux_sq == 0.0);
    CHECK(eb.z_energy < 1e-16);
    CHECK(eb.z_mass < 1e-16);
  }
  SUBCASE("terms are non-negative and rows add up") {
    Fixture fx;
    const ScalarField ubar = dirichlet_solve(fx.Abar, fx.bc, {}).u;
    const ScalarField u = dirichlet_solve(fx.A, fx.bc, {}).u;
    const ScalarField u2s = two_scale_expand(ubar, fx.ctx());
    std::vector<BoxBudget> rows;
    const ErrorBudget eb = error_budget(u, ubar, u2s, fx.A, fx.Abar, fx.ctx(), {{0.5}, 1.0}, &rows);
    CHECK(eb.boxes == 2);
    CHECK(rows.size() == 2);
    double bulk = 0.0, layer = 0.0;
    for (const auto& r : rows) {
      CHECK(r.bulk > 0.0);
      CHECK(r.layer > 0.0);
      bulk += r.bulk;
      layer += r.layer;
    }
    CHECK(eb.bulk == doctest::Approx(bulk));
    CHECK(eb.layer == doctest::Approx(layer));
    CHECK(eb.total >= eb.bulk);
    CHECK(eb.total >= eb.layer);
    CHECK(eb.flux_sq > 0.0);
    CHECK(eb.z_energy > 0.0);
    CHECK(eb.z_energy_weighted == eb.z_energy);
    CHECK(eb.z_mass >= 0.0);
  }
}
