#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "homlab/cell.hpp"
#include "homlab/grid.hpp"

namespace homlab {

/// Horizontal multi-index of a Whitney box (N = dim - 1 components used).
using BoxIndex = std::array<int, kMaxDim - 1>;

/// Whitney box of generation k < 0: x in 2^k j + [-2^{k-1}, 2^{k-1})^N,
/// t in [2^k, 2^{k+1}). Horizontal coordinates wrap with the layout period.
struct WhitneyBox {
  int k = -1;
  BoxIndex j{};
  double eps = 1.0;
  double eta = 0.5;

  double side() const noexcept;
  Vec center(int dim) const noexcept;
  /// The box itself (lower corner may be negative; regions wrap in x).
  Box box(int dim) const noexcept;
  /// Concentric cube of side (1 - shrink) 2^k.
  Box shrunk(int dim, double shrink) const noexcept;
};

struct WhitneyLayout {
  int dim = 2;
  double x_extent = 1.0;
  int K = 1;
  std::vector<WhitneyBox> boxes;

  /// Boxes per horizontal axis in generation k.
  int per_axis(int k) const noexcept;
  /// Position of box (k, j) in `boxes`, generations stored from -1 down.
  std::size_t index(int k, const BoxIndex& j) const noexcept;
  /// Box containing p, or nullptr when t is outside [2^{-K}, 1).
  const WhitneyBox* locate(const Vec& p) const noexcept;
  /// Boxes whose closures touch box i (the union forms the enlarged box).
  std::vector<std::size_t> touching(std::size_t i) const;
};

/// Generation of height t > 0, i.e. floor(log2 t).
int generation_of(double t) noexcept;
/// Horizontal index of the generation-k box containing p, wrapped to the
/// layout period.
BoxIndex box_index_of(const Vec& p, int dim, int k, double x_extent) noexcept;
/// Signed horizontal offset x - c wrapped into [-L/2, L/2).
double wrapped_offset(double x, double c, double period) noexcept;

/// Geometry only; eps and eta are left at their defaults. Throws ConfigError
/// unless K >= 1 and x_extent * 2 is a positive integer.
WhitneyLayout whitney_decompose(int dim, double x_extent, int K);

enum class ScheduleMode { theorem, laminate, constant, custom };

std::string to_string(ScheduleMode m);
ScheduleMode parse_schedule_mode(const std::string& name);

struct EpsilonSchedule {
  ScheduleMode mode = ScheduleMode::theorem;
  /// Meyers exponent; may be +infinity.
  double p = 3.0;
  double c = 1.0;
  double custom_exponent = 1.0;

  /// (3p-1)/(2(p-1)), 3/2, 1 or the custom value. Throws ConfigError for p <= 1
  /// in theorem mode.
  double exponent() const;
};

/// min(1, c 2^{exponent k}) for k < 0.
double epsilon_for(int k, const EpsilonSchedule& s);
/// 1 / ceil(1/eps): a whole number of periods per box side.
double round_epsilon(double eps);
/// min(1/2, eps^{2p/(3p-1)}); p = +infinity gives the exponent 2/3.
double eta_for(double eps, double p);

/// Maps (k, j) to a template label.
struct Assignment {
  enum class Rule { single, alternating };
  Rule rule = Rule::single;
  std::string first;
  std::string second;

  /// Alternating uses `first` when k + sum(j) is even.
  const std::string& label_for(int k, const BoxIndex& j, int horizontal) const noexcept;
};

struct CoefficientSpec {
  int dim = 2;
  double lambda = 1.0;
  /// Upper ellipticity bound (defaults to 1).
  double upper = 1.0;
  int K = 1;
  double x_extent = 1.0;
  EpsilonSchedule schedule;
  std::map<std::string, TemplateDef> templates;
  Assignment assignment;
  SymMat A_inf;
  /// Cells per coefficient period required along every axis.
  int min_cells_per_period = 8;

  /// Checks labels, dimensions and ellipticity of templates and A_inf.
  void validate() const;
};

/// Decomposition with rounded eps and re-derived eta on every box.
WhitneyLayout make_layout(const CoefficientSpec& spec);

/// Largest admissible spacing for the spec (8 cells per finest period);
/// infinity when all templates are constant.
double required_spacing(const CoefficientSpec& spec, const WhitneyLayout& layout);

/// Locally periodic field: A_inf for t >= 1, template(x / (2^k eps)) on each
/// resolved box, homogenized value of the box's template for t < 2^{-K}.
/// Throws ConfigError when the grid is under-resolved or `abar` lacks a label.
MatrixField assemble_A(const CoefficientSpec& spec, const WhitneyLayout& layout, const Grid& g,
                       const std::map<std::string, SymMat>& abar);

/// Piecewise constant homogenized field: Abar of the box's template for
/// t < 1, A_inf above.
MatrixField assemble_Abar(const CoefficientSpec& spec, const Grid& g,
                          const std::map<std::string, SymMat>& abar);

/// Quintic smoothstep 6s^5 - 15s^4 + 10s^3 on [0,1], and its derivative.
double smoothstep(double s) noexcept;
double smoothstep_derivative(double s) noexcept;

/// Cutoff equal to 1 on the (1-eta)-shrunken box and 0 outside the
/// (1-eta/2)-shrunken box, product of per-axis smoothsteps.
double cutoff_value(const WhitneyBox& b, int dim, double x_extent, const Vec& p) noexcept;
Vec cutoff_gradient(const WhitneyBox& b, int dim, double x_extent, const Vec& p) noexcept;
/// Componentwise bound on |grad chi|: 1.875 / (eta 2^k / 4).
double cutoff_gradient_bound(const WhitneyBox& b) noexcept;
/// Nodal samples of the cutoff on a grid.
ScalarField cutoff_chi(const WhitneyBox& b, const WhitneyLayout& layout, const Grid& g);

}  // namespace homlab
