#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "homlab/analysis.hpp"
#include "homlab/cell.hpp"
#include "homlab/linalg.hpp"
#include "homlab/strip.hpp"

using namespace homlab;

namespace {

MatrixField rough_field(const Grid& g) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.2, 1.0);
  MatrixField A(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) A.set(c, SymMat::identity(g.dim(), U(rng)));
  return A;
}

void BM_Q1Apply(benchmark::State& state) {
  const Grid g = make_strip_grid(2, 1.0, 1.0, static_cast<int>(state.range(0)));
  const MatrixField A = rough_field(g);
  const Q1Operator op(A);
  std::vector<double> x(g.num_nodes(), 1.0), y(g.num_nodes());
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = g.is_boundary_node(n) ? 0.0 : std::sin(0.01 * n);
  for (auto _ : state) {
    op.apply(x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.num_nodes()));
}
BENCHMARK(BM_Q1Apply)->Arg(256)->Arg(1024);

void BM_StripSolve(benchmark::State& state) {
  const Grid g = make_strip_grid(2, 1.0, 2.0, static_cast<int>(state.range(0)));
  const MatrixField A = rough_field(g);
  BoundaryData bc;
  bc.f = [](const Vec& p) { return std::cos(2 * std::numbers::pi * p[0]); };
  SolveOptions o;
  o.preconditioner = state.range(1) ? PreconditionerKind::spectral : PreconditionerKind::jacobi;
  int iterations = 0;
  for (auto _ : state) {
    const SolveReport r = dirichlet_solve(A, bc, o);
    iterations = r.iterations;
  }
  state.counters["cg_iterations"] = iterations;
}
BENCHMARK(BM_StripSolve)->Args({128, 0})->Args({128, 1})->Args({512, 1})->Unit(benchmark::kMillisecond);

void BM_CellProblem(benchmark::State& state) {
  const TemplateDef t = random_checkerboard(2, 4, 0.2, 1.0, 3);
  CellOptions o;
  o.resolution = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(solve_cell({"bench", t}, o).abar);
}
BENCHMARK(BM_CellProblem)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_DkpIntegral(benchmark::State& state) {
  const Grid g = make_strip_grid(2, 1.0, 2.0, static_cast<int>(state.range(0)));
  const MatrixField A = rough_field(g);
  for (auto _ : state) benchmark::DoNotOptimize(dkp_carleson_integral(A, {{0.0}, 0.5}).total);
}
BENCHMARK(BM_DkpIntegral)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
