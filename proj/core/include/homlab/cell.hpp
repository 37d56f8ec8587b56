#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "homlab/grid.hpp"
#include "homlab/linalg.hpp"

namespace homlab {

/// Analytic description of a 1-periodic coefficient on the unit cell.
struct TemplateDef {
  enum class Kind { constant, laminate, checkerboard, smooth, table };

  Kind kind = Kind::constant;
  int dim = 2;
  /// constant: the matrix.
  SymMat matrix;
  /// laminate: equal sub-intervals of [0,1) along `axis`, one matrix each.
  /// table: one matrix per block of a divisions^dim block grid (axis 0 fastest).
  int axis = 0;
  std::vector<SymMat> pieces;
  /// checkerboard: divisions^dim blocks alternating `even`, `odd` by index parity.
  int divisions = 2;
  SymMat even, odd;
  /// smooth: (mean + amplitude * prod_a cos(2 pi y_a)) Id.
  double mean = 1.0;
  double amplitude = 0.0;

  /// Coefficient at y, wrapped into the unit cell.
  SymMat at(const Vec& y) const;
  /// Stable text form used for cache keys.
  std::string canonical() const;
  /// Smallest and largest eigenvalue attained by the template.
  std::pair<double, double> eigen_range() const;
};

std::string to_string(TemplateDef::Kind k);
TemplateDef::Kind parse_template_kind(const std::string& name);

/// Table template whose blocks are random SPD matrices with eigenvalues drawn
/// uniformly in [lower, upper] and random principal axes.
TemplateDef random_checkerboard(int dim, int divisions, double lower, double upper,
                                std::uint64_t seed);

struct PeriodicTemplate {
  std::string label;
  TemplateDef def;
};

/// Fully periodic unit cell [0,1)^dim with `resolution` cells per axis.
Grid unit_cell_grid(int dim, int resolution);
/// Cell-center sampling of a template.
MatrixField sample_template(const TemplateDef& def, const Grid& cell_grid);

/// Mean of A and inverse of the mean of A^{-1} over all cells.
SymMat arithmetic_mean(const MatrixField& a);
SymMat harmonic_mean(const MatrixField& a);

struct CellOptions {
  int resolution = 128;
  CgOptions cg{};
  PreconditionerKind preconditioner = PreconditionerKind::spectral;
};

/// Zero-mean periodic solution of -div A (grad phi + e_i) = 0. Throws
/// SolverError on non-convergence.
ScalarField solve_corrector(const MatrixField& a_per, int i, const CellOptions& opts,
                            CgResult* report = nullptr);

/// Column i of the result is the cell average of A (grad phi^i + e_i). The
/// result is symmetrized; the largest entry of |Abar - Abar^T| before
/// symmetrization is written to `asymmetry`.
SymMat homogenized_matrix(const MatrixField& a_per, std::span<const ScalarField> phi,
                          double* asymmetry = nullptr);

/// Cell-centered q^i = A (grad phi^i + e_i) - Abar e_i.
VectorField flux(const MatrixField& a_per, const ScalarField& phi_i, const SymMat& abar, int i);

/// Flux corrector sigma^i: one zero-mean periodic field per pair j<k solving
/// -Lap sigma^{ijk} = d_j q^{ik} - d_k q^{ij}, after removing the mean of q.
/// Pairs are ordered (0,1),(0,2),(1,2). Throws SolverError.
std::vector<ScalarField> solve_flux_corrector(const VectorField& q_i, const CellOptions& opts,
                                              CgResult* report = nullptr);

/// Index of the pair (j,k), j != k, in the sigma storage, and the sign that
/// turns the stored entry into sigma^{ijk}.
int pair_index(int dim, int j, int k) noexcept;
double pair_sign(int j, int k) noexcept;

/// Cell-centered (div sigma^i)^j = sum_k d_k sigma^{ijk}.
VectorField divergence(std::span<const ScalarField> sigma_i);

struct CellDiagnostics {
  std::array<double, kMaxDim> phi_sup{};
  std::array<double, kMaxDim> phi_energy{};
  std::array<double, kMaxDim> grad_phi_sup{};
  std::array<double, kMaxDim> phi_mean{};
  std::array<double, kMaxDim> sigma_sup{};
  std::array<double, kMaxDim> sigma_energy{};
  std::array<double, kMaxDim> q_mean{};
  /// ||div sigma^i - q^i||_L2 / ||q^i||_L2; absolute when ||q^i|| <= 1e-12.
  std::array<double, kMaxDim> div_residual{};
  std::array<int, kMaxDim> phi_iterations{};
  std::array<double, kMaxDim> phi_residual{};
  int sigma_iterations = 0;
  double sigma_residual = 0.0;
  double abar_asymmetry = 0.0;
  /// Distance of eig(Abar) outside [min eig A, max eig A].
  double ellipticity_slack = 0.0;
};

struct CorrectorSet {
  std::string label;
  int resolution = 0;
  std::string cache_key;
  TemplateDef def;
  MatrixField a_per;
  std::vector<ScalarField> phi;                 // [i], nodal
  std::vector<std::vector<ScalarField>> sigma;  // [i][pair], nodal
  std::vector<VectorField> q;                   // [i], cell-centered
  SymMat abar;
  CellDiagnostics diagnostics;

  int dim() const noexcept { return def.dim; }
  /// sigma^{ijk} at a node; zero on the diagonal.
  double sigma_entry(int i, int j, int k, std::size_t node) const noexcept;
};

/// Sup and energy norms, means and residuals of a solved set. Solver
/// statistics already stored in `c.diagnostics` are kept.
CellDiagnostics corrector_bounds(const CorrectorSet& c);

/// Full cell pipeline: sample, correctors, Abar, fluxes, flux correctors,
/// diagnostics.
CorrectorSet solve_cell(const PeriodicTemplate& t, const CellOptions& opts);

/// FNV-1a 64 of the canonical template text and the resolution, in hex.
std::string cache_key(const TemplateDef& def, int resolution);

/// Directory layout: Abar.json, phi_<i>.bin, sigma_<i>_<j><k>.bin.
void save_corrector_set(const CorrectorSet& c, const std::filesystem::path& dir);
/// Loads a set saved by save_corrector_set and recomputes fluxes from the
/// stored template. Throws ConfigError if the directory is incomplete.
CorrectorSet load_corrector_set(const std::filesystem::path& dir, const TemplateDef& def);

}  // namespace homlab
