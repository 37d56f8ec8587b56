#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "homlab/errors.hpp"
#include "homlab/strip.hpp"
#include "homlab/whitney.hpp"

using namespace homlab;

namespace {

TemplateDef constant(double v, int dim = 2) {
  TemplateDef t;
  t.dim = dim;
  t.matrix = SymMat::identity(dim, v);
  return t;
}

TemplateDef laminate(double a0, double a1) {
  TemplateDef t;
  t.kind = TemplateDef::Kind::laminate;
  t.pieces = {SymMat::identity(2, a0), SymMat::identity(2, a1)};
  return t;
}

CoefficientSpec spec_with(const TemplateDef& t, int K, ScheduleMode mode = ScheduleMode::theorem) {
  CoefficientSpec s;
  s.dim = t.dim;
  s.lambda = 1.0 / 3.0;
  s.K = K;
  s.schedule.mode = mode;
  s.schedule.p = std::numeric_limits<double>::infinity();
  s.templates["a"] = t;
  s.assignment.first = "a";
  s.A_inf = SymMat::identity(t.dim);
  return s;
}

SymMat diag2(double a, double b) { return SymMat::diagonal(std::vector<double>{a, b}); }

}  // namespace

TEST_CASE("Whitney counts and geometry") {
  const WhitneyLayout one = whitney_decompose(2, 1.0, 1);
  REQUIRE(one.boxes.size() == 2);
  for (const auto& b : one.boxes) {
    CHECK(b.k == -1);
    CHECK(b.box(2).lo[1] == 0.5);
    CHECK(b.box(2).hi[1] == 1.0);
  }
  CHECK(whitney_decompose(2, 1.0, 3).boxes.size() == 14);
  CHECK(whitney_decompose(3, 1.0, 2).boxes.size() == 4 + 16);
  CHECK(whitney_decompose(2, 1.5, 2).boxes.size() == 3 + 6);
  CHECK_THROWS_AS(whitney_decompose(2, 0.3, 2), ConfigError);
  CHECK_THROWS_AS(whitney_decompose(2, 1.0, 0), ConfigError);

  const WhitneyLayout l = whitney_decompose(2, 1.0, 3);
  const WhitneyBox& b = l.boxes[l.index(-2, {1, 0})];
  CHECK(b.k == -2);
  CHECK(b.j[0] == 1);
  CHECK(b.side() == 0.25);
  CHECK(b.box(2).lo[1] == 0.25);
  CHECK(b.box(2).hi[1] == 0.5);
}

TEST_CASE("property: each generation partitions its slab") {
  for (int dim : {2, 3}) {
    const WhitneyLayout l = whitney_decompose(dim, 1.0, 4);
    for (int k = -1; k >= -4; --k) {
      double vol = 0.0;
      for (const auto& b : l.boxes)
        if (b.k == k) vol += b.box(dim).volume();
      CHECK(vol == std::ldexp(1.0, k));
    }
    CHECK(l.locate({0.3, 0.3, 0.3})->k == (dim == 2 ? -2 : -2));
    CHECK(l.locate({0.3, 0.01, 0.01}) == (dim == 2 ? nullptr : nullptr));
  }
  const WhitneyLayout l = whitney_decompose(2, 1.0, 3);
  // x = 0.95 wraps into the box centred at 0 for k = -1.
  const WhitneyBox* w = l.locate({0.95, 0.7, 0});
  REQUIRE(w != nullptr);
  CHECK(w->j[0] == 0);
  CHECK(l.touching(l.index(-2, {1, 0})).size() >= 5);
}

TEST_CASE("epsilon schedules") {
  EpsilonSchedule s;
  s.mode = ScheduleMode::theorem;
  s.p = 3.0;
  CHECK(s.exponent() == doctest::Approx(2.0));
  CHECK(epsilon_for(-2, s) == doctest::Approx(0.0625));
  s.mode = ScheduleMode::laminate;
  CHECK(epsilon_for(-2, s) == doctest::Approx(0.125));
  s.mode = ScheduleMode::constant;
  CHECK(epsilon_for(-2, s) == doctest::Approx(0.25));
  s.mode = ScheduleMode::custom;
  s.custom_exponent = 0.5;
  CHECK(epsilon_for(-2, s) == doctest::Approx(0.5));
  s.mode = ScheduleMode::theorem;
  s.p = 1.0;
  CHECK_THROWS_AS(epsilon_for(-1, s), ConfigError);
  s.p = std::numeric_limits<double>::infinity();
  CHECK(s.exponent() == doctest::Approx(1.5));
  CHECK(parse_schedule_mode("laminate") == ScheduleMode::laminate);
  CHECK_THROWS_AS(parse_schedule_mode("geometric"), ConfigError);
}

TEST_CASE("epsilon rounding and eta") {
  CHECK(round_epsilon(0.0625) == 0.0625);
  CHECK(round_epsilon(0.3) == doctest::Approx(0.25));
  CHECK(round_epsilon(1.0) == 1.0);
  CHECK(eta_for(0.0625, 3.0) == doctest::Approx(0.125));
  CHECK(eta_for(1.0, 3.0) == 0.5);
  CHECK(eta_for(0.125, std::numeric_limits<double>::infinity()) == doctest::Approx(0.25));
  CHECK_THROWS_AS(eta_for(0.5, 1.0), ConfigError);
}

TEST_CASE("property: eps and eta are monotone and eta >= eps for c <= 1") {
  for (auto mode : {ScheduleMode::theorem, ScheduleMode::laminate, ScheduleMode::constant}) {
    for (double p : {1.5, 3.0, 10.0, std::numeric_limits<double>::infinity()}) {
      for (double c : {1.0, 0.5, 0.1}) {
        CoefficientSpec s = spec_with(constant(1.0), 6, mode);
        s.schedule.p = p;
        s.schedule.c = c;
        const WhitneyLayout l = make_layout(s);
        double prev_eps = 2.0, prev_eta = 2.0;
        for (const auto& b : l.boxes) {
          CHECK(b.eps <= prev_eps);
          CHECK(b.eta <= prev_eta);
          CHECK(b.eta >= b.eps);
          CHECK(b.eps > 0.0);
          CHECK(b.eta <= 0.5);
          CHECK(std::abs(1.0 / b.eps - std::round(1.0 / b.eps)) < 1e-9);
          prev_eps = b.eps;
          prev_eta = b.eta;
        }
      }
    }
  }
}

TEST_CASE("assemble_A examples") {
  const std::map<std::string, SymMat> abar{{"a", SymMat::identity(2, 0.5)}};
  SUBCASE("identity template gives the identity field") {
    CoefficientSpec s = spec_with(constant(1.0), 3);
    const WhitneyLayout l = make_layout(s);
    const Grid g = make_strip_grid(2, 1.0, 2.0, 16);
    const MatrixField A = assemble_A(s, l, g, {{"a", SymMat::identity(2)}});
    for (std::size_t c = 0; c < g.num_cells(); ++c) CHECK(A.at(c) == SymMat::identity(2));
  }
  SUBCASE("laminate sampled at t = 0.6, above t = 1 and below the band") {
    CoefficientSpec s = spec_with(laminate(1.0 / 3.0, 1.0), 1);
    s.A_inf = diag2(0.4, 0.9);
    const WhitneyLayout l = make_layout(s);
    CHECK(l.boxes[0].eps == doctest::Approx(1.0 / 3.0));
    const Grid g = make_strip_grid(2, 1.0, 2.0, 64);
    const MatrixField A = assemble_A(s, l, g, abar);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const Vec p = g.cell_center(c);
      if (p[1] > 0.6 && p[1] < 0.6 + g.h(1)) {
        const double y = std::fmod(p[0] / (0.5 / 3.0), 1.0);
        CHECK(A.at(c)(0, 0) == (y < 0.5 ? 1.0 / 3.0 : 1.0));
        CHECK(A.at(c)(1, 1) == A.at(c)(0, 0));
      }
      if (p[1] > 1.2 && p[1] < 1.2 + g.h(1)) CHECK(A.at(c) == s.A_inf);
      if (p[1] < 0.5) CHECK(A.at(c) == abar.at("a"));
    }
  }
  SUBCASE("under-resolved grids are rejected with the required resolution") {
    CoefficientSpec s = spec_with(laminate(1.0 / 3.0, 1.0), 3, ScheduleMode::constant);
    const WhitneyLayout l = make_layout(s);
    const Grid g = make_strip_grid(2, 1.0, 2.0, 32);
    try {
      assemble_A(s, l, g, abar);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("512 cells per unit") != std::string::npos);
    }
    CHECK(required_spacing(s, l) == doctest::Approx(1.0 / 512));
  }
  SUBCASE("missing homogenized matrix is a configuration error") {
    CoefficientSpec s = spec_with(laminate(1.0 / 3.0, 1.0), 1);
    const Grid g = make_strip_grid(2, 1.0, 2.0, 64);
    CHECK_THROWS_AS(assemble_A(s, make_layout(s), g, {}), ConfigError);
  }
}

TEST_CASE("property: assembled A is elliptic and deterministic") {
  CoefficientSpec s = spec_with(laminate(1.0 / 3.0, 1.0), 3, ScheduleMode::constant);
  s.templates["b"] = random_checkerboard(2, 2, 1.0 / 3.0, 1.0, 4);
  s.assignment.rule = Assignment::Rule::alternating;
  s.assignment.second = "b";
  const std::map<std::string, SymMat> abar{{"a", diag2(0.5, 2.0 / 3.0)},
                                           {"b", SymMat::identity(2, 0.6)}};
  const WhitneyLayout l = make_layout(s);
  const Grid g = make_strip_grid(2, 1.0, 2.0, 512);
  const MatrixField A = assemble_A(s, l, g, abar);
  const MatrixField B = assemble_A(s, l, g, abar);
  const auto [lo, hi] = A.eigen_range();
  CHECK(lo >= s.lambda - 1e-12);
  CHECK(hi <= 1.0 + 1e-12);
  CHECK(std::equal(A.packed().begin(), A.packed().end(), B.packed().begin()));
}

TEST_CASE("assemble_Abar examples") {
  const Grid g = make_strip_grid(2, 1.0, 2.0, 16);
  SUBCASE("single template with A_inf = Abar is constant") {
    CoefficientSpec s = spec_with(laminate(1.0 / 3.0, 1.0), 2);
    const SymMat ab = diag2(0.5, 2.0 / 3.0);
    s.A_inf = ab;
    const MatrixField Ab = assemble_Abar(s, g, {{"a", ab}});
    for (std::size_t c = 0; c < g.num_cells(); ++c) CHECK(Ab.at(c) == ab);
  }
  SUBCASE("alternating templates give two values below t = 1") {
    CoefficientSpec s = spec_with(constant(1.0), 2);
    s.templates["b"] = constant(0.5);
    s.assignment.rule = Assignment::Rule::alternating;
    s.assignment.second = "b";
    const MatrixField Ab = assemble_Abar(s, g, {{"a", SymMat::identity(2)}, {"b", SymMat::identity(2, 0.5)}});
    std::set<double> values;
    for (std::size_t c = 0; c < g.num_cells(); ++c)
      if (g.cell_center(c)[1] < 1.0) values.insert(Ab.at(c)(0, 0));
    CHECK(values == std::set<double>{0.5, 1.0});
  }
  SUBCASE("identity template") {
    CoefficientSpec s = spec_with(constant(1.0), 2);
    const MatrixField Ab = assemble_Abar(s, g, {{"a", SymMat::identity(2)}});
    for (std::size_t c = 0; c < g.num_cells(); ++c) CHECK(Ab.at(c) == SymMat::identity(2));
  }
}

TEST_CASE("cutoff profile") {
  WhitneyBox b;
  b.k = -2;
  b.j = {1, 0};
  b.eta = 0.25;
  const double side = b.side();
  const Vec c = b.center(2);
  CHECK(cutoff_value(b, 2, 1.0, c) == 1.0);
  CHECK(cutoff_value(b, 2, 1.0, {c[0] + 0.5 * side, c[1], 0}) == 0.0);
  CHECK(cutoff_value(b, 2, 1.0, {c[0], c[1] - 0.5 * side, 0}) == 0.0);
  // Transition shell along x: |r| in [(1-eta) s/2, (1-eta/2) s/2].
  const double r0 = 0.5 * (1 - b.eta) * side, r1 = 0.5 * (1 - 0.5 * b.eta) * side;
  const double mid = cutoff_value(b, 2, 1.0, {c[0] + 0.5 * (r0 + r1), c[1], 0});
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
  CHECK(mid == doctest::Approx(0.5));
  double prev = 1.0;
  for (int i = 0; i <= 20; ++i) {
    const double r = r0 + (r1 - r0) * i / 20.0;
    const double v = cutoff_value(b, 2, 1.0, {c[0] + r, c[1], 0});
    CHECK(v <= prev);
    prev = v;
  }
  CHECK(prev == 0.0);
  // Gradient bound and agreement with a finite difference.
  const double bound = cutoff_gradient_bound(b);
  CHECK(bound <= 30.0 / (side * b.eta / 2));
  for (int i = 0; i <= 40; ++i) {
    const Vec p{c[0] + r0 + (r1 - r0) * i / 40.0, c[1] + 0.3 * r0, 0};
    const Vec gr = cutoff_gradient(b, 2, 1.0, p);
    CHECK(std::abs(gr[0]) <= bound * (1 + 1e-12));
    const double hfd = 1e-7;
    const double fd = (cutoff_value(b, 2, 1.0, {p[0] + hfd, p[1], 0}) - cutoff_value(b, 2, 1.0, {p[0] - hfd, p[1], 0})) / (2 * hfd);
    CHECK(gr[0] == doctest::Approx(fd).epsilon(1e-5).scale(bound));
  }
  CHECK(smoothstep(0.0) == 0.0);
  CHECK(smoothstep(1.0) == 1.0);
  CHECK(smoothstep(0.5) == 0.5);
}

TEST_CASE("spec validation") {
  CoefficientSpec s = spec_with(constant(1.0), 2);
  CHECK_NOTHROW(s.validate());
  s.assignment.first = "zzz";
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec_with(constant(0.1), 2);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec_with(constant(1.0), 2);
  s.A_inf = SymMat::identity(2, 2.0);
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
