#pragma once

#include <functional>
#include <string>
#include <vector>

#include "homlab/grid.hpp"
#include "homlab/linalg.hpp"

namespace homlab {

/// Upper bound on strip grid nodes; keeps one scalar field under 1 GB.
inline constexpr double kMaxStripNodes = 1.0e8;

/// Uniform grid on [0, x_extent)^N x [0, t_top] with `cells_per_unit` cells
/// per unit length on every axis; horizontal axes periodic on request.
Grid make_strip_grid(int dim, double x_extent, double t_top, int cells_per_unit,
                     bool periodic_x = true);

using PointFunction = std::function<double(const Vec&)>;

struct BoundaryData {
  enum class Lateral { periodic, dirichlet };
  enum class Top { dirichlet_mean, dirichlet_exact };

  /// Bottom data, evaluated at nodes with t = 0.
  PointFunction f;
  Lateral lateral = Lateral::periodic;
  /// Values on lateral faces (Lateral::dirichlet).
  PointFunction lateral_value;
  Top top = Top::dirichlet_mean;
  /// Values on the top face (Top::dirichlet_exact).
  PointFunction top_value;
};

/// Discrete system K u = b on the free nodes with the Dirichlet values lifted
/// into b. The operator references `A`, which must outlive the system.
struct LinearSystem {
  Q1Operator op;
  std::vector<double> rhs;
  /// Boundary values on Dirichlet nodes, zero elsewhere.
  std::vector<double> lift;
};

/// Dirichlet node values from the boundary data: f at t = 0, top closure at
/// t = t_top, lateral data on non-periodic horizontal faces.
std::vector<double> boundary_values(const Grid& g, const BoundaryData& bc);

/// Throws ConfigError on a grid / boundary-data mismatch or a coefficient
/// that is not positive definite.
LinearSystem assemble_system(const MatrixField& A, const BoundaryData& bc);

struct SolveOptions {
  double tol = 1e-10;
  int max_iterations = 0;
  PreconditionerKind preconditioner = PreconditionerKind::spectral;
};

struct SolveReport {
  ScalarField u;
  double residual = 0.0;
  int iterations = 0;
  /// Integral of A grad u . grad u.
  double energy = 0.0;
  bool converged = false;
  /// max(min f - min u, max u - max f, 0): relaxed maximum principle defect.
  double max_principle_violation = 0.0;
};

/// Solves -div A grad u = 0 with the given data. Throws SolverError on
/// non-convergence or non-finite iterates.
SolveReport dirichlet_solve(const MatrixField& A, const BoundaryData& bc, const SolveOptions& opts);

/// Solves -div A grad z = div F with z = 0 on all Dirichlet faces; F given at
/// cell centers or Gauss points on A's grid.
SolveReport solve_error_equation(const MatrixField& A, const VectorField& rhs_flux,
                                 const SolveOptions& opts);

}  // namespace homlab
