#pragma once

#include <map>
#include <string>
#include <vector>

#include "homlab/cell.hpp"
#include "homlab/grid.hpp"
#include "homlab/whitney.hpp"

namespace homlab {

/// T_R(x) = (x + (-R/2, R/2)^N) x (0, R).
struct Tent {
  Vec x{};
  double R = 1.0;

  /// Region on grid g; horizontally at most one period wide on periodic axes
  /// and clipped to the grid elsewhere. `clipped` reports any clipping.
  Box region(const Grid& g, bool* clipped = nullptr) const;
};

/// Cellwise density t |grad u|^2 at cell centers.
std::vector<double> carleson_density(const ScalarField& u);

struct CarlesonValue {
  double raw = 0.0;
  double normalized = 0.0;
  bool clipped = false;
};

/// Midpoint quadrature of the density over the tent; normalized = raw / R^N.
CarlesonValue carleson_functional(const ScalarField& u, const Tent& tent);
CarlesonValue carleson_functional(const Grid& g, std::span<const double> density, const Tent& tent);

struct CarlesonRow {
  Tent tent;
  double raw = 0.0;
  double normalized = 0.0;
  /// Part of raw from t < band_top (the unresolved band).
  double sub_band = 0.0;
  bool clipped = false;
};

struct CarlesonReport {
  std::vector<CarlesonRow> rows;
  /// (R, max over centers of the normalized value), one entry per radius.
  std::vector<std::pair<double, double>> per_radius;
  double sup = 0.0;
  /// max over radii / min over radii of the per-radius maxima.
  double ratio = 0.0;
};

/// Evaluates the tent functional for every radius over grid-aligned centers
/// spaced R/2 (over one period on periodic axes). `band_top` splits off the
/// sub-resolution band (0 disables).
CarlesonReport carleson_sup(const ScalarField& u, const std::vector<double>& radii,
                            double band_top = 0.0);

/// Number of points of the fixed ball sample in dkp_alpha.
inline constexpr int kDkpSamples = 64;

/// Sup of |A(Y) - A(Y')| over Y, Y' in the ball of radius t/2 around Z. Uses
/// all cells whose centers lie in the ball when there are at most 64 of them,
/// otherwise a 64-point golden-angle spiral sample of the ball (periodic axes
/// wrap, others clamp). Throws ConfigError if Z is outside the grid.
double dkp_alpha(const MatrixField& A, const Vec& Z);

struct DkpSlab {
  int k = 0;
  double value = 0.0;
};

struct DkpReport {
  double total = 0.0;
  /// Every dyadic slab [2^k, 2^{k+1}) meeting the tent, ascending k.
  std::vector<DkpSlab> slabs;

  /// Values for k = -1, -2, ..., -K restricted to slabs meeting the tent.
  std::vector<DkpSlab> generations(int K) const;
};

/// Midpoint quadrature of alpha^2 / t over the tent, split by the slab of the
/// cell center. total is the sum of the slab values.
DkpReport dkp_carleson_integral(const MatrixField& A, const Tent& tent);

/// Everything the localized expansion needs from the coefficient model.
struct ExpansionContext {
  const CoefficientSpec* spec = nullptr;
  const WhitneyLayout* layout = nullptr;
  const std::map<std::string, CorrectorSet>* correctors = nullptr;

  const CorrectorSet& correctors_for(const WhitneyBox& b) const;
};

/// Nodal gradient by averaging the Q1 gradients of the adjacent cells.
std::vector<Vec> nodal_gradient(const ScalarField& u);

/// Cell-center Hessian of a nodal field by differencing cell gradients;
/// central where both neighbours share the cell's value of `pieces`, one
/// sided otherwise, zero when isolated. Returned packed per cell.
std::vector<SymMat> cell_hessian(const ScalarField& u, const MatrixField& pieces);

/// u2s = ubar + sum_kj 2^k eps chi_kj phi^i(x / (2^k eps)) d_i ubar at nodes.
ScalarField two_scale_expand(const ScalarField& ubar, const ExpansionContext& ctx);

/// Flux A grad u2s - Abar grad ubar at the Gauss points of every cell. The
/// error equation with this right side reproduces u - u2s on the grid.
VectorField expansion_flux(const MatrixField& A, const MatrixField& Abar, const ScalarField& u2s,
                           const ScalarField& ubar);

/// Cell-center value of the localized error flux
/// 2^k eps (A phi^i - sigma^i)(y) grad(chi d_i ubar) + (1 - chi)(A - Abar_kj) grad ubar.
VectorField error_flux(const MatrixField& A, const MatrixField& Abar, const ScalarField& ubar,
                       const ExpansionContext& ctx);

struct ErrorBudget {
  /// sum (2^k eps)^2 int chi^2 |D^2 ubar|^2 over boxes meeting T_2R.
  double bulk = 0.0;
  /// sum (1 + (eps/eta)^2) int_{W \ W_eta} |grad ubar|^2 over the same boxes.
  /// Boxes with a constant template contribute zero to both sums.
  double layer = 0.0;
  /// bulk + layer.
  double total = 0.0;
  /// int_{T_2R} |f|^2 of the localized error flux.
  double flux_sq = 0.0;
  /// int_{T_R} |grad z|^2 and (R min 1) times it.
  double z_energy = 0.0;
  double z_energy_weighted = 0.0;
  /// R^{-2} int_{T_2R} z^2.
  double z_mass = 0.0;
  /// Boxes that contributed.
  int boxes = 0;
};

struct BoxBudget {
  std::size_t box = 0;
  double bulk = 0.0;
  double layer = 0.0;
};

/// Budget of the tent; per-box rows go to `rows` when given.
ErrorBudget error_budget(const ScalarField& u, const ScalarField& ubar, const ScalarField& u2s,
                         const MatrixField& A, const MatrixField& Abar,
                         const ExpansionContext& ctx, const Tent& tent,
                         std::vector<BoxBudget>* rows = nullptr);

}  // namespace homlab
