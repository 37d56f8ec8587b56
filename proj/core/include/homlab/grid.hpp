#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "homlab/symmat.hpp"

namespace homlab {

using Index = std::array<int, kMaxDim>;

/// Axis-aligned box [lo, hi) in dim dimensions.
struct Box {
  int dim = 0;
  Vec lo{};
  Vec hi{};

  double volume() const noexcept;
  bool contains(const Vec& p) const noexcept;
};

/// Description of a uniform tensor grid. Axis dim-1 is the vertical (t) axis
/// wherever a half-space geometry is meant.
struct GridSpec {
  int dim = 2;
  Vec origin{};
  Vec extent{};
  Index cells{};
  std::array<bool, kMaxDim> periodic{};
};

/// Validated uniform grid. Node storage identifies opposite faces of periodic
/// axes, so a periodic axis with n cells carries n distinct nodes. Indices are
/// lexicographic with axis 0 fastest.
class Grid {
 public:
  Grid() = default;
  /// Throws ConfigError for dim outside {2,3}, fewer than 2 cells on an
  /// axis, or a non-positive extent.
  explicit Grid(const GridSpec& spec);

  const GridSpec& spec() const noexcept { return spec_; }
  int dim() const noexcept { return spec_.dim; }
  int cells(int a) const noexcept { return spec_.cells[a]; }
  bool periodic(int a) const noexcept { return spec_.periodic[a]; }
  double h(int a) const noexcept { return h_[a]; }
  double origin(int a) const noexcept { return spec_.origin[a]; }
  double extent(int a) const noexcept { return spec_.extent[a]; }
  int nodes(int a) const noexcept { return periodic(a) ? cells(a) : cells(a) + 1; }
  int corners() const noexcept { return 1 << dim(); }

  std::size_t num_cells() const noexcept { return num_cells_; }
  std::size_t num_nodes() const noexcept { return num_nodes_; }
  double cell_volume() const noexcept { return cell_volume_; }
  Box box() const noexcept;

  std::size_t cell_index(const Index& i) const noexcept;
  Index cell_multi(std::size_t c) const noexcept;
  /// Node multi-index components may run to cells(a) on periodic axes; they
  /// wrap to 0 there.
  std::size_t node_index(Index i) const noexcept;
  Index node_multi(std::size_t n) const noexcept;

  Vec cell_center(std::size_t c) const noexcept;
  Vec node_point(std::size_t n) const noexcept;

  /// Corner node ids of cell c; bit a of the local corner number selects the
  /// upper node along axis a.
  void cell_nodes(std::size_t c, std::span<std::size_t> out) const noexcept;

  /// True for nodes on a face of a non-periodic axis (Dirichlet nodes).
  bool is_boundary_node(std::size_t n) const noexcept;

  bool same_layout(const Grid& o) const noexcept;

 private:
  GridSpec spec_{};
  Vec h_{};
  std::size_t num_cells_ = 0;
  std::size_t num_nodes_ = 0;
  double cell_volume_ = 0.0;
};

Grid make_grid(const GridSpec& spec);

enum class Location { node, cell };

/// Scalar values attached to nodes or cells of a grid.
struct ScalarField {
  Grid grid;
  Location location = Location::node;
  std::vector<double> values;

  static ScalarField nodal(const Grid& g, double fill = 0.0);
  static ScalarField cellwise(const Grid& g, double fill = 0.0);

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) noexcept { return values[i]; }
  double operator[](std::size_t i) const noexcept { return values[i]; }
};

/// Cellwise vector data. With one point per cell the value sits at the cell
/// center; with 2^dim points they sit at the tensor Gauss points (+-1/sqrt 3
/// in reference coordinates), ordered like cell corners.
struct VectorField {
  Grid grid;
  int points_per_cell = 1;
  std::vector<double> values;  // [cell][point][component]

  static VectorField centered(const Grid& g);
  static VectorField gauss(const Grid& g);

  std::size_t offset(std::size_t cell, int point = 0) const noexcept {
    return (cell * points_per_cell + point) * grid.dim();
  }
  Vec at(std::size_t cell, int point = 0) const noexcept;
  void set(std::size_t cell, int point, const Vec& v) noexcept;
};

/// Per-cell symmetric coefficient matrix (packed upper triangle).
class MatrixField {
 public:
  MatrixField() = default;
  explicit MatrixField(const Grid& g);
  MatrixField(const Grid& g, const SymMat& fill);

  const Grid& grid() const noexcept { return grid_; }
  SymMat at(std::size_t cell) const noexcept {
    return SymMat::from_packed(grid_.dim(), {data_.data() + cell * stride_, stride_});
  }
  void set(std::size_t cell, const SymMat& m) noexcept;
  std::span<const double> packed() const noexcept { return data_; }
  std::span<double> packed() noexcept { return data_; }
  std::size_t stride() const noexcept { return stride_; }

  /// Smallest and largest eigenvalue over all cells.
  std::pair<double, double> eigen_range() const;

 private:
  Grid grid_;
  std::size_t stride_ = 0;
  std::vector<double> data_;
};

/// Offsets of the tensor Gauss points inside a cell, in units of h, relative
/// to the lower corner.
double gauss_offset(int bit) noexcept;

/// Cell-center gradient of the Q1 interpolant of a nodal field.
VectorField gradient(const ScalarField& u);
/// Q1 gradient at the 2^dim Gauss points of every cell.
VectorField gradient_at_gauss(const ScalarField& u);

/// Gradient of one cell at a point given in local coordinates xi in [0,1]^dim.
Vec cell_gradient(const Grid& g, std::span<const double> nodal, std::size_t cell,
                  const Vec& xi) noexcept;

/// Q1 interpolation of a nodal field at an arbitrary point; periodic axes
/// wrap, non-periodic axes clamp to the grid box.
double interpolate(const ScalarField& u, const Vec& p) noexcept;

/// Calls fn(cell, overlap_volume) for every cell meeting the region. Regions
/// may wrap around periodic axes (length at most the period). Throws
/// ConfigError if the region leaves the grid along a non-periodic axis.
void for_each_overlap(const Grid& g, const Box& region,
                      const std::function<void(std::size_t, double)>& fn);

/// Midpoint rule with fractional overlap weights.
double integrate(const Grid& g, std::span<const double> cell_values, const Box& region);
double integrate(const ScalarField& g, const Box& region);

}  // namespace homlab
