#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "homlab/grid.hpp"

namespace homlab {

/// Compressed sparse rows; only used for inspection of small systems.
struct CsrMatrix {
  std::size_t rows = 0;
  std::vector<std::size_t> row_start;
  std::vector<std::size_t> col;
  std::vector<double> val;

  double at(std::size_t i, std::size_t j) const;
};

class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::size_t size() const = 0;
  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
};

class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual void apply(std::span<const double> r, std::span<double> z) const = 0;
};

/// Matrix-free Q1 stiffness operator of -div(A grad .) on a uniform grid with a
/// cellwise constant coefficient, integrated exactly on every cell. Nodes on
/// faces of non-periodic axes carry Dirichlet conditions: apply() acts on the
/// free block only (inputs must vanish on Dirichlet nodes, outputs are zeroed
/// there). The operator keeps a reference to the coefficient field.
class Q1Operator final : public LinearOperator {
 public:
  explicit Q1Operator(const MatrixField& coefficient);

  const Grid& grid() const noexcept { return a_->grid(); }
  const MatrixField& coefficient() const noexcept { return *a_; }
  std::size_t size() const override { return grid().num_nodes(); }

  void apply(std::span<const double> x, std::span<double> y) const override;
  /// y = K x over all nodes, boundary rows and columns included.
  void apply_full(std::span<const double> x, std::span<double> y) const;
  /// Free-block diagonal; 1 on Dirichlet nodes.
  std::vector<double> diagonal() const;
  /// x^T K x over all nodes, i.e. the exact integral of A grad u . grad u.
  double energy(std::span<const double> x) const;
  /// Full stiffness matrix including boundary rows (small grids only).
  CsrMatrix assemble() const;

  const std::vector<std::uint8_t>& dirichlet_mask() const noexcept { return fixed_; }

  /// Exact element stiffness of one cell, corner ordering as Grid::cell_nodes.
  void element_matrix(std::size_t cell, std::span<double> ke) const;

 private:
  void apply_full_2d(std::span<const double> x, std::span<double> y) const;
  void apply_full_generic(std::span<const double> x, std::span<double> y) const;

  const MatrixField* a_;
  std::vector<std::uint8_t> fixed_;
  // Reference integrals of d_a phi_m d_b phi_n over one cell, (a,b) packed
  // like SymMat with the off-diagonal blocks symmetrized.
  std::vector<double> ref_;
};

class JacobiPreconditioner final : public Preconditioner {
 public:
  explicit JacobiPreconditioner(const Q1Operator& op);
  void apply(std::span<const double> r, std::span<double> z) const override;

 private:
  std::vector<double> inv_diag_;
  std::vector<std::uint8_t> fixed_;
};

/// Exact inverse of the Q1 operator for a constant diagonal coefficient,
/// applied by fast diagonalization: a discrete Hartley transform along
/// periodic axes and a type-I sine transform along Dirichlet axes. On fully
/// periodic grids the constant mode is projected out.
class SpectralPreconditioner final : public Preconditioner {
 public:
  SpectralPreconditioner(const Grid& g, const Vec& diagonal_coefficient);
  ~SpectralPreconditioner() override;
  SpectralPreconditioner(const SpectralPreconditioner&) = delete;
  SpectralPreconditioner& operator=(const SpectralPreconditioner&) = delete;

  void apply(std::span<const double> r, std::span<double> z) const override;

 private:
  struct Plan;
  Grid grid_;
  std::vector<std::size_t> free_nodes_;
  std::vector<double> inv_eig_;
  std::unique_ptr<Plan> plan_;
};

enum class PreconditionerKind { jacobi, spectral };

PreconditionerKind parse_preconditioner(const std::string& name);
std::string to_string(PreconditionerKind k);

/// Spectral preconditioner built from the cell average of the diagonal of A,
/// or Jacobi.
std::unique_ptr<Preconditioner> make_preconditioner(PreconditionerKind kind, const Q1Operator& op);

struct CgOptions {
  double rel_tol = 1e-10;
  /// 0 selects 20 x (largest cell count per axis).
  int max_iterations = 0;
  /// Keep iterates orthogonal to constants (periodic cell problems).
  bool zero_mean = false;
};

struct CgResult {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
  bool finite = true;
};

/// Preconditioned conjugate gradients for K x = b, starting from x.
CgResult pcg(const LinearOperator& op, const Preconditioner& precond, std::span<const double> b,
             std::span<double> x, const CgOptions& opts, int default_max_iterations);

int default_max_iterations(const Grid& g);

/// Load vector b_n = -integral of F . grad phi_n over all nodes n, for a
/// cellwise flux given at cell centers or Gauss points (exact for that
/// representation). Right side of the weak form of -div(A grad u) = div F.
std::vector<double> flux_load(const VectorField& flux);

}  // namespace homlab
