#include "homlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "homlab/errors.hpp"

namespace homlab {

double Box::volume() const noexcept {
  double v = 1.0;
  for (int a = 0; a < dim; ++a) v *= std::max(0.0, hi[a] - lo[a]);
  return v;
}

bool Box::contains(const Vec& p) const noexcept {
  for (int a = 0; a < dim; ++a)
    if (p[a] < lo[a] || p[a] >= hi[a]) return false;
  return true;
}

Grid::Grid(const GridSpec& spec) : spec_(spec) {
  if (spec.dim < 2 || spec.dim > kMaxDim)
    throw ConfigError("grid dimension must be 2 or 3, got " + std::to_string(spec.dim));
  num_cells_ = 1;
  num_nodes_ = 1;
  cell_volume_ = 1.0;
  for (int a = 0; a < spec.dim; ++a) {
    if (spec.cells[a] < 2)
      throw ConfigError("axis " + std::to_string(a) + " needs at least 2 cells, got " +
                        std::to_string(spec.cells[a]));
    if (!(spec.extent[a] > 0.0) || !std::isfinite(spec.extent[a]))
      throw ConfigError("axis " + std::to_string(a) + " has non-positive extent");
    h_[a] = spec.extent[a] / spec.cells[a];
    num_cells_ *= static_cast<std::size_t>(spec.cells[a]);
    num_nodes_ *= static_cast<std::size_t>(nodes(a));
    cell_volume_ *= h_[a];
  }
  for (int a = spec.dim; a < kMaxDim; ++a) {
    spec_.cells[a] = 1;
    spec_.extent[a] = 0.0;
    spec_.periodic[a] = false;
  }
}

Grid make_grid(const GridSpec& spec) { return Grid(spec); }

Box Grid::box() const noexcept {
  Box b{dim(), {}, {}};
  for (int a = 0; a < dim(); ++a) {
    b.lo[a] = origin(a);
    b.hi[a] = origin(a) + extent(a);
  }
  return b;
}

std::size_t Grid::cell_index(const Index& i) const noexcept {
  std::size_t idx = 0;
  for (int a = dim() - 1; a >= 0; --a) idx = idx * cells(a) + i[a];
  return idx;
}

Index Grid::cell_multi(std::size_t c) const noexcept {
  Index i{};
  for (int a = 0; a < dim(); ++a) {
    i[a] = static_cast<int>(c % cells(a));
    c /= cells(a);
  }
  return i;
}

std::size_t Grid::node_index(Index i) const noexcept {
  std::size_t idx = 0;
  for (int a = dim() - 1; a >= 0; --a) {
    int k = i[a];
    if (periodic(a)) {
      k %= cells(a);
      if (k < 0) k += cells(a);
    }
    idx = idx * nodes(a) + k;
  }
  return idx;
}

Index Grid::node_multi(std::size_t n) const noexcept {
  Index i{};
  for (int a = 0; a < dim(); ++a) {
    i[a] = static_cast<int>(n % nodes(a));
    n /= nodes(a);
  }
  return i;
}

Vec Grid::cell_center(std::size_t c) const noexcept {
  const Index i = cell_multi(c);
  Vec p{};
  for (int a = 0; a < dim(); ++a) p[a] = origin(a) + (i[a] + 0.5) * h(a);
  return p;
}

Vec Grid::node_point(std::size_t n) const noexcept {
  const Index i = node_multi(n);
  Vec p{};
  for (int a = 0; a < dim(); ++a) p[a] = origin(a) + i[a] * h(a);
  return p;
}

void Grid::cell_nodes(std::size_t c, std::span<std::size_t> out) const noexcept {
  const Index base = cell_multi(c);
  for (int m = 0; m < corners(); ++m) {
    Index i = base;
    for (int a = 0; a < dim(); ++a) i[a] += (m >> a) & 1;
    out[m] = node_index(i);
  }
}

bool Grid::is_boundary_node(std::size_t n) const noexcept {
  const Index i = node_multi(n);
  for (int a = 0; a < dim(); ++a)
    if (!periodic(a) && (i[a] == 0 || i[a] == cells(a))) return true;
  return false;
}

bool Grid::same_layout(const Grid& o) const noexcept {
  if (dim() != o.dim()) return false;
  for (int a = 0; a < dim(); ++a) {
    if (cells(a) != o.cells(a) || periodic(a) != o.periodic(a)) return false;
    if (std::abs(h(a) - o.h(a)) > 1e-14 * h(a)) return false;
    if (std::abs(origin(a) - o.origin(a)) > 1e-14 * std::max(1.0, extent(a))) return false;
  }
  return true;
}

ScalarField ScalarField::nodal(const Grid& g, double fill) {
  return ScalarField{g, Location::node, std::vector<double>(g.num_nodes(), fill)};
}

ScalarField ScalarField::cellwise(const Grid& g, double fill) {
  return ScalarField{g, Location::cell, std::vector<double>(g.num_cells(), fill)};
}

VectorField VectorField::centered(const Grid& g) {
  return VectorField{g, 1, std::vector<double>(g.num_cells() * g.dim(), 0.0)};
}

VectorField VectorField::gauss(const Grid& g) {
  const int ppc = g.corners();
  return VectorField{g, ppc, std::vector<double>(g.num_cells() * ppc * g.dim(), 0.0)};
}

Vec VectorField::at(std::size_t cell, int point) const noexcept {
  Vec v{};
  const std::size_t o = offset(cell, point);
  for (int a = 0; a < grid.dim(); ++a) v[a] = values[o + a];
  return v;
}

void VectorField::set(std::size_t cell, int point, const Vec& v) noexcept {
  const std::size_t o = offset(cell, point);
  for (int a = 0; a < grid.dim(); ++a) values[o + a] = v[a];
}

MatrixField::MatrixField(const Grid& g)
    : grid_(g), stride_(packed_size(g.dim())), data_(g.num_cells() * stride_, 0.0) {}

MatrixField::MatrixField(const Grid& g, const SymMat& fill) : MatrixField(g) {
  for (std::size_t c = 0; c < g.num_cells(); ++c) set(c, fill);
}

void MatrixField::set(std::size_t cell, const SymMat& m) noexcept {
  const auto p = m.packed();
  std::copy(p.begin(), p.end(), data_.begin() + cell * stride_);
}

std::pair<double, double> MatrixField::eigen_range() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  // Piecewise-constant fields repeat the same matrix over long runs.
  SymMat last(grid_.dim());
  bool have_last = false;
  for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
    const SymMat m = at(c);
    if (have_last && m == last) continue;
    const Vec ev = m.eigenvalues();
    lo = std::min(lo, ev[0]);
    hi = std::max(hi, ev[grid_.dim() - 1]);
    last = m;
    have_last = true;
  }
  return {lo, hi};
}

double gauss_offset(int bit) noexcept {
  static const double g = 0.5 / std::sqrt(3.0);
  return bit ? 0.5 + g : 0.5 - g;
}

Vec cell_gradient(const Grid& g, std::span<const double> nodal, std::size_t cell,
                  const Vec& xi) noexcept {
  std::array<std::size_t, 8> ids{};
  g.cell_nodes(cell, ids);
  const int d = g.dim();
  Vec grad{};
  for (int m = 0; m < g.corners(); ++m) {
    for (int a = 0; a < d; ++a) {
      double w = ((m >> a) & 1) ? 1.0 / g.h(a) : -1.0 / g.h(a);
      for (int b = 0; b < d; ++b) {
        if (b == a) continue;
        w *= ((m >> b) & 1) ? xi[b] : 1.0 - xi[b];
      }
      grad[a] += w * nodal[ids[m]];
    }
  }
  return grad;
}

VectorField gradient(const ScalarField& u) {
  const Grid& g = u.grid;
  VectorField out = VectorField::centered(g);
  const Vec center{0.5, 0.5, 0.5};
  if (g.dim() == 2) {
    // Hot path: cell-center gradient is the average of the two edge differences.
    const int nx = g.cells(0), ny = g.cells(1), sx = g.nodes(0), sy = g.nodes(1);
    const double hx = g.h(0), hy = g.h(1);
    for (int j = 0; j < ny; ++j) {
      const std::size_t r0 = static_cast<std::size_t>(j) * sx;
      const std::size_t r1 = static_cast<std::size_t>(j + 1 == sy ? 0 : j + 1) * sx;
      for (int i = 0; i < nx; ++i) {
        const int i1 = (i + 1 == sx) ? 0 : i + 1;
        const std::size_t n00 = r0 + i;
        const std::size_t n10 = r0 + i1;
        const std::size_t n01 = r1 + i;
        const std::size_t n11 = r1 + i1;
        const double u00 = u.values[n00], u10 = u.values[n10], u01 = u.values[n01],
                     u11 = u.values[n11];
        const std::size_t c = static_cast<std::size_t>(j) * nx + i;
        out.values[2 * c] = 0.5 * ((u10 - u00) + (u11 - u01)) / hx;
        out.values[2 * c + 1] = 0.5 * ((u01 - u00) + (u11 - u10)) / hy;
      }
    }
    return out;
  }
  for (std::size_t c = 0; c < g.num_cells(); ++c)
    out.set(c, 0, cell_gradient(g, u.values, c, center));
  return out;
}

VectorField gradient_at_gauss(const ScalarField& u) {
  const Grid& g = u.grid;
  VectorField out = VectorField::gauss(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    for (int q = 0; q < g.corners(); ++q) {
      Vec xi{};
      for (int a = 0; a < g.dim(); ++a) xi[a] = gauss_offset((q >> a) & 1);
      out.set(c, q, cell_gradient(g, u.values, c, xi));
    }
  }
  return out;
}

double interpolate(const ScalarField& u, const Vec& p) noexcept {
  const Grid& g = u.grid;
  Index base{};
  Vec xi{};
  for (int a = 0; a < g.dim(); ++a) {
    double r = (p[a] - g.origin(a)) / g.h(a);
    const int n = g.cells(a);
    if (g.periodic(a)) {
      r = std::fmod(r, static_cast<double>(n));
      if (r < 0) r += n;
    } else {
      r = std::clamp(r, 0.0, static_cast<double>(n));
    }
    int k = static_cast<int>(std::floor(r));
    if (k >= n) k = n - 1;
    base[a] = k;
    xi[a] = r - k;
  }
  double v = 0.0;
  for (int m = 0; m < g.corners(); ++m) {
    Index i = base;
    double w = 1.0;
    for (int a = 0; a < g.dim(); ++a) {
      const int bit = (m >> a) & 1;
      i[a] += bit;
      w *= bit ? xi[a] : 1.0 - xi[a];
    }
    if (w != 0.0) v += w * u.values[g.node_index(i)];
  }
  return v;
}

namespace {

struct Segment {
  int cell;
  double length;
};

std::vector<Segment> axis_segments(const Grid& g, int a, double lo, double hi) {
  std::vector<Segment> segs;
  if (!(hi > lo)) return segs;
  const double h = g.h(a);
  const int n = g.cells(a);
  double r0 = (lo - g.origin(a)) / h;
  double r1 = (hi - g.origin(a)) / h;
  const double tol = 1e-9;
  if (g.periodic(a)) {
    if (r1 - r0 > n * (1.0 + tol))
      throw ConfigError("region longer than the period along axis " + std::to_string(a));
    r1 = std::min(r1, r0 + n);
  } else {
    if (r0 < -tol * n || r1 > n * (1.0 + tol))
      throw ConfigError("region outside grid along axis " + std::to_string(a));
    r0 = std::max(r0, 0.0);
    r1 = std::min(r1, static_cast<double>(n));
  }
  const long k0 = static_cast<long>(std::floor(r0));
  const long k1 = static_cast<long>(std::ceil(r1));
  for (long k = k0; k < k1; ++k) {
    const double len = (std::min(r1, static_cast<double>(k + 1)) -
                        std::max(r0, static_cast<double>(k))) * h;
    if (len <= 0.0) continue;
    long kk = k % n;
    if (kk < 0) kk += n;
    segs.push_back({static_cast<int>(kk), len});
  }
  return segs;
}

}  // namespace

void for_each_overlap(const Grid& g, const Box& region,
                      const std::function<void(std::size_t, double)>& fn) {
  std::array<std::vector<Segment>, kMaxDim> segs;
  for (int a = 0; a < g.dim(); ++a) {
    segs[a] = axis_segments(g, a, region.lo[a], region.hi[a]);
    if (segs[a].empty()) return;
  }
  if (g.dim() == 2) {
    for (const Segment& sy : segs[1])
      for (const Segment& sx : segs[0])
        fn(static_cast<std::size_t>(sy.cell) * g.cells(0) + sx.cell, sx.length * sy.length);
    return;
  }
  for (const Segment& sz : segs[2])
    for (const Segment& sy : segs[1])
      for (const Segment& sx : segs[0])
        fn(g.cell_index({sx.cell, sy.cell, sz.cell}), sx.length * sy.length * sz.length);
}

double integrate(const Grid& g, std::span<const double> cell_values, const Box& region) {
  double sum = 0.0;
  for_each_overlap(g, region, [&](std::size_t c, double w) { sum += w * cell_values[c]; });
  return sum;
}

double integrate(const ScalarField& g, const Box& region) {
  if (g.location != Location::cell) throw ConfigError("integrate expects a cell-valued field");
  return integrate(g.grid, g.values, region);
}

}  // namespace homlab
