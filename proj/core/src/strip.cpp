#include "homlab/strip.hpp"

#include <algorithm>
#include <cmath>

#include "homlab/errors.hpp"

namespace homlab {

Grid make_strip_grid(int dim, double x_extent, double t_top, int cells_per_unit, bool periodic_x) {
  GridSpec s;
  s.dim = dim;
  for (int a = 0; a < dim; ++a) {
    const double ext = a + 1 < dim ? x_extent : t_top;
    const double cells = ext * cells_per_unit;
    if (cells != std::round(cells))
      throw ConfigError("strip extents must be whole multiples of the spacing");
    s.extent[a] = ext;
    s.cells[a] = static_cast<int>(cells);
    s.periodic[a] = a + 1 < dim && periodic_x;
  }
  double nodes = 1.0;
  for (int a = 0; a < dim; ++a) nodes *= s.cells[a] + 1.0;
  if (nodes > kMaxStripNodes)
    throw ConfigError("strip grid with " + std::to_string(static_cast<long long>(nodes)) +
                      " nodes exceeds the limit of " + std::to_string(static_cast<long long>(kMaxStripNodes)));
  return Grid(s);
}

namespace {

void check_grid(const Grid& g, const BoundaryData& bc) {
  const int d = g.dim();
  if (g.periodic(d - 1)) throw ConfigError("the t axis cannot be periodic");
  for (int a = 0; a + 1 < d; ++a) {
    const bool want = bc.lateral == BoundaryData::Lateral::periodic;
    if (g.periodic(a) != want)
      throw ConfigError("lateral boundary condition does not match grid periodicity");
  }
  if (!bc.f) throw ConfigError("boundary data f missing");
  if (bc.lateral == BoundaryData::Lateral::dirichlet && !bc.lateral_value)
    throw ConfigError("lateral Dirichlet data missing");
  if (bc.top == BoundaryData::Top::dirichlet_exact && !bc.top_value)
    throw ConfigError("top Dirichlet data missing");
}

void check_coefficient(const MatrixField& A) {
  const auto [lo, hi] = A.eigen_range();
  if (!(lo > 0.0) || !std::isfinite(hi)) throw ConfigError("coefficient field is not positive definite");
}

// Mean of f over the bottom face: nodal mean on periodic axes (exact for the
// Q1 interpolant), trapezoid weights on bounded axes.
double bottom_mean(const Grid& g, const BoundaryData& bc) {
  const int d = g.dim();
  double sum = 0.0, wsum = 0.0;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const Index m = g.node_multi(n);
    if (m[d - 1] != 0) continue;
    double w = 1.0;
    for (int a = 0; a + 1 < d; ++a)
      if (!g.periodic(a) && (m[a] == 0 || m[a] == g.cells(a))) w *= 0.5;
    sum += w * bc.f(g.node_point(n));
    wsum += w;
  }
  return sum / wsum;
}

}  // namespace

std::vector<double> boundary_values(const Grid& g, const BoundaryData& bc) {
  check_grid(g, bc);
  const int d = g.dim();
  const double top_mean = bc.top == BoundaryData::Top::dirichlet_mean ? bottom_mean(g, bc) : 0.0;
  std::vector<double> v(g.num_nodes(), 0.0);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    if (!g.is_boundary_node(n)) continue;
    const Index m = g.node_multi(n);
    const Vec p = g.node_point(n);
    if (m[d - 1] == 0) {
      v[n] = bc.f(p);
    } else if (m[d - 1] == g.cells(d - 1)) {
      v[n] = bc.top == BoundaryData::Top::dirichlet_mean ? top_mean : bc.top_value(p);
    } else {
      v[n] = bc.lateral_value(p);
    }
  }
  return v;
}

LinearSystem assemble_system(const MatrixField& A, const BoundaryData& bc) {
  check_coefficient(A);
  LinearSystem s{Q1Operator(A), {}, boundary_values(A.grid(), bc)};
  const std::size_t n = A.grid().num_nodes();
  std::vector<double> k_lift(n);
  s.op.apply_full(s.lift, k_lift);
  s.rhs.assign(n, 0.0);
  const auto& fixed = s.op.dirichlet_mask();
  for (std::size_t i = 0; i < n; ++i) s.rhs[i] = fixed[i] ? 0.0 : -k_lift[i];
  return s;
}

namespace {

SolveReport finish_solve(const Q1Operator& op, std::span<const double> rhs,
                         std::span<const double> lift, const SolveOptions& opts) {
  const Grid& g = op.grid();
  auto pre = make_preconditioner(opts.preconditioner, op);
  std::vector<double> x(g.num_nodes(), 0.0);
  CgOptions cg;
  cg.rel_tol = opts.tol;
  cg.max_iterations = opts.max_iterations;
  const CgResult r = pcg(op, *pre, rhs, x, cg, default_max_iterations(g));
  if (!r.finite) throw SolverError("non-finite values in the strip solve", r.iterations, r.rel_residual);
  if (!r.converged) throw SolverError("strip solve did not converge", r.iterations, r.rel_residual);
  SolveReport rep;
  rep.u = ScalarField::nodal(g);
  for (std::size_t i = 0; i < x.size(); ++i) rep.u[i] = x[i] + lift[i];
  rep.residual = r.rel_residual;
  rep.iterations = r.iterations;
  rep.converged = true;
  rep.energy = op.energy(rep.u.values);
  return rep;
}

}  // namespace

SolveReport dirichlet_solve(const MatrixField& A, const BoundaryData& bc, const SolveOptions& opts) {
  const LinearSystem sys = assemble_system(A, bc);
  SolveReport rep = finish_solve(sys.op, sys.rhs, sys.lift, opts);
  const Grid& g = A.grid();
  const auto& fixed = sys.op.dirichlet_mask();
  double bmin = INFINITY, bmax = -INFINITY;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    if (!fixed[n]) continue;
    bmin = std::min(bmin, sys.lift[n]);
    bmax = std::max(bmax, sys.lift[n]);
  }
  const auto [umin, umax] = std::minmax_element(rep.u.values.begin(), rep.u.values.end());
  rep.max_principle_violation = std::max({0.0, bmin - *umin, *umax - bmax});
  return rep;
}

SolveReport solve_error_equation(const MatrixField& A, const VectorField& rhs_flux,
                                 const SolveOptions& opts) {
  check_coefficient(A);
  if (!rhs_flux.grid.same_layout(A.grid())) throw ConfigError("flux and coefficient grids differ");
  const Q1Operator op(A);
  std::vector<double> b = flux_load(rhs_flux);
  const auto& fixed = op.dirichlet_mask();
  for (std::size_t i = 0; i < b.size(); ++i)
    if (fixed[i]) b[i] = 0.0;
  const std::vector<double> zero(b.size(), 0.0);
  return finish_solve(op, b, zero, opts);
}

}  // namespace homlab
