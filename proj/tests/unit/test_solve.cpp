#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "homlab/errors.hpp"
#include "homlab/oracle1d.hpp"
#include "homlab/strip.hpp"

using namespace homlab;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Grid box_grid(int n) {
  GridSpec s;
  s.dim = 2;
  s.extent = {1.0, 1.0, 0.0};
  s.cells = {n, n, 0};
  return make_grid(s);
}

MatrixField random_field(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.2, 1.0), V(-0.15, 0.15);
  MatrixField A(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) A.set(c, SymMat::from_packed(2, std::vector<double>{U(rng), V(rng), U(rng)}));
  return A;
}

BoundaryData cosine_data() {
  BoundaryData bc;
  bc.f = [](const Vec& p) { return std::cos(kTwoPi * p[0]); };
  return bc;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("Q1 stiffness on 2x2 cells has interior diagonal 8/3") {
  const Grid g = box_grid(2);
  const MatrixField A(g, SymMat::identity(2));
  const Q1Operator op(A);
  const CsrMatrix K = op.assemble();
  const std::size_t centre = g.node_index({1, 1, 0});
  CHECK(K.at(centre, centre) == doctest::Approx(8.0 / 3.0).epsilon(1e-14));
  CHECK(K.at(centre, g.node_index({0, 0, 0})) == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
  int free = 0;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) free += g.is_boundary_node(n) ? 0 : 1;
  CHECK(free == 1);
}

TEST_CASE("property: stiffness is symmetric with zero row sums") {
  const Grid g = box_grid(5);
  const MatrixField A = random_field(g, 8);
  const CsrMatrix K = Q1Operator(A).assemble();
  double asym = 0.0;
  for (std::size_t i = 0; i < K.rows; ++i) {
    double row = 0.0;
    for (std::size_t p = K.row_start[i]; p < K.row_start[i + 1]; ++p) {
      row += K.val[p];
      asym = std::max(asym, std::abs(K.val[p] - K.at(K.col[p], i)));
    }
    CHECK(std::abs(row) < 1e-13);
  }
  CHECK(asym == 0.0);
}

TEST_CASE("constant data gives a constant solution") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 16);
  const MatrixField A = random_field(g, 1);
  BoundaryData bc;
  bc.f = [](const Vec&) { return 0.7; };
  const SolveReport r = dirichlet_solve(A, bc, {});
  for (double v : r.u.values) CHECK(v == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(r.energy < 1e-15);
}

TEST_CASE("Laplacian on the strip reproduces the decaying harmonic") {
  double prev = 0.0;
  for (int n : {32, 64}) {
    const Grid g = make_strip_grid(2, 1.0, 2.0, n);
    const MatrixField A(g, SymMat::identity(2));
    const SolveReport r = dirichlet_solve(A, cosine_data(), {});
    CHECK(r.converged);
    double err = 0.0;
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      const Vec p = g.node_point(i);
      const double e = r.u[i] - std::cos(kTwoPi * p[0]) * std::exp(-kTwoPi * p[1]);
      err += e * e * g.cell_volume();
    }
    err = std::sqrt(err);
    CHECK(err < 5e-3 * 32.0 * 32.0 / (n * n) + std::exp(-2 * kTwoPi));
    if (prev > 0) CHECK(err < 0.3 * prev);
    prev = err;
  }
}

TEST_CASE("affine data with Dirichlet sides is reproduced exactly") {
  const Grid g = make_strip_grid(2, 1.0, 1.0, 16, false);
  const MatrixField A(g, SymMat::identity(2));
  BoundaryData bc;
  bc.f = [](const Vec& p) { return p[0]; };
  bc.lateral = BoundaryData::Lateral::dirichlet;
  bc.lateral_value = bc.f;
  bc.top = BoundaryData::Top::dirichlet_exact;
  bc.top_value = bc.f;
  const SolveReport r = dirichlet_solve(A, bc, {});
  for (std::size_t n = 0; n < g.num_nodes(); ++n) CHECK(r.u[n] == doctest::Approx(g.node_point(n)[0]).epsilon(1e-10));
}

TEST_CASE("mismatched boundary data is a configuration error") {
  const Grid g = make_strip_grid(2, 1.0, 1.0, 8, true);
  const MatrixField A(g, SymMat::identity(2));
  BoundaryData bc = cosine_data();
  bc.lateral = BoundaryData::Lateral::dirichlet;
  bc.lateral_value = bc.f;
  CHECK_THROWS_AS(dirichlet_solve(A, bc, {}), ConfigError);
  CHECK_THROWS_AS(make_strip_grid(2, 1.0, 1.3, 8), ConfigError);
}

TEST_CASE("error equation examples") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 64);
  const MatrixField A(g, SymMat::identity(2));
  SUBCASE("zero flux gives zero") {
    const SolveReport r = solve_error_equation(A, VectorField::centered(g), {});
    for (double v : r.u.values) CHECK(v == 0.0);
  }
  SUBCASE("flux grad w gives -w") {
    auto w = [](const Vec& p) { return std::sin(kTwoPi * p[0]) * std::sin(std::numbers::pi * p[1] / 2.0); };
    ScalarField wi = ScalarField::nodal(g);
    for (std::size_t n = 0; n < g.num_nodes(); ++n) wi[n] = w(g.node_point(n));
    const VectorField F = gradient_at_gauss(wi);
    const SolveReport r = solve_error_equation(A, F, {});
    double err = 0.0;
    for (std::size_t n = 0; n < g.num_nodes(); ++n) err = std::max(err, std::abs(r.u[n] + wi[n]));
    CHECK(err < 1e-8);
  }
}

TEST_CASE("property: energy minimality and Galerkin orthogonality") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 24);
  const MatrixField A = random_field(g, 21);
  const SolveReport r = dirichlet_solve(A, cosine_data(), {1e-12, 0, PreconditionerKind::spectral});
  const Q1Operator op(A);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N;
  std::vector<double> Ku(g.num_nodes());
  op.apply_full(r.u.values, Ku);
  const double scale = std::sqrt(dot(Ku, Ku));
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> v(g.num_nodes());
    for (std::size_t n = 0; n < g.num_nodes(); ++n) v[n] = g.is_boundary_node(n) ? 0.0 : N(rng);
    // Galerkin orthogonality: a(u, v) = 0 for test functions vanishing on the boundary.
    CHECK(std::abs(dot(Ku, v)) <= 1e-9 * scale * std::sqrt(dot(v, v)));
    std::vector<double> w = r.u.values;
    for (std::size_t n = 0; n < w.size(); ++n) w[n] += 1e-2 * v[n];
    CHECK(op.energy(r.u.values) <= op.energy(w) + 1e-12);
  }
}

TEST_CASE("property: Jacobi and spectral preconditioners agree") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 32);
  const MatrixField A = random_field(g, 5);
  const SolveReport a = dirichlet_solve(A, cosine_data(), {1e-12, 0, PreconditionerKind::jacobi});
  const SolveReport b = dirichlet_solve(A, cosine_data(), {1e-12, 0, PreconditionerKind::spectral});
  CHECK(b.iterations < a.iterations);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) CHECK(a.u[n] == doctest::Approx(b.u[n]).epsilon(1e-8));
}

TEST_CASE("property: relaxed maximum principle on rough coefficients") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 64);
  const MatrixField A = random_field(g, 13);
  BoundaryData bc;
  bc.f = [](const Vec& p) { return std::tanh(std::sin(kTwoPi * p[0]) / 0.05); };
  const SolveReport r = dirichlet_solve(A, bc, {});
  CHECK(r.max_principle_violation <= 1e-2 * 2.0);
}

TEST_CASE("non-convergence raises SolverError") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 32);
  const MatrixField A = random_field(g, 3);
  CHECK_THROWS_AS(dirichlet_solve(A, cosine_data(), {1e-14, 2, PreconditionerKind::jacobi}), SolverError);
}

TEST_CASE("property: strip with t-only data reduces to the 1-D oracle") {
  struct Case {
    oracle1d::Profile1D p;
    double eps;
  };
  const Case cases[] = {
      {{{1.0, 3.0}, {{0.0, 0.0}, {1.0, 1.0}}}, 0.25},
      {{{0.5, 1.0}, {{0.0, 0.0}, {0.5, 1.0}, {1.0, 0.0}}}, 0.5},
      {{{1.0, 1.0 / 3.0, 0.6}, {{0.0, 1.0}, {1.0, -1.0}}}, 0.125},
  };
  for (const auto& cs : cases) {
    const int n = 96;
    const Grid g = make_strip_grid(2, 0.25, 1.0, n);
    MatrixField A(g);
    const auto m = static_cast<int>(cs.p.a.size());
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const double y = g.cell_center(c)[1] / cs.eps;
      const int piece = static_cast<int>(std::floor((y - std::floor(y)) * m));
      A.set(c, SymMat::identity(2, cs.p.a[static_cast<std::size_t>(piece)]));
    }
    // -(a u')' = -f' is -div A grad z = div F with F = (0, -f(t)).
    const oracle1d::ExactSolution exact(cs.p, cs.eps);
    auto f_at = [&](double t) {
      const auto& f = cs.p.f;
      for (std::size_t i = 1; i < f.size(); ++i)
        if (t <= f[i].first) return f[i - 1].second + (f[i].second - f[i - 1].second) * (t - f[i - 1].first) / (f[i].first - f[i - 1].first);
      return f.back().second;
    };
    VectorField F = VectorField::gauss(g);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const Index mi = g.cell_multi(c);
      for (int q = 0; q < 4; ++q) {
        const double t = (mi[1] + gauss_offset((q >> 1) & 1)) * g.h(1);
        F.set(c, q, {0.0, -f_at(t), 0.0});
      }
    }
    const SolveReport r = solve_error_equation(A, F, {1e-12, 0, PreconditionerKind::spectral});
    double err = 0.0;
    for (std::size_t nd = 0; nd < g.num_nodes(); ++nd) {
      const Vec p = g.node_point(nd);
      err = std::max(err, std::abs(r.u[nd] - exact(p[1])));
    }
    CHECK(err < 1e-8);
  }
}
