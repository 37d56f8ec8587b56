#include "homlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "homlab/errors.hpp"

namespace homlab {

Box Tent::region(const Grid& g, bool* clipped) const {
  const int d = g.dim();
  bool clip = false;
  Box b{d, {}, {}};
  for (int a = 0; a + 1 < d; ++a) {
    const double lo_g = g.origin(a), hi_g = g.origin(a) + g.extent(a);
    double half = 0.5 * R;
    if (g.periodic(a)) {
      if (R > g.extent(a)) {
        half = 0.5 * g.extent(a);
        clip = true;
      }
      b.lo[a] = x[a] - half;
      b.hi[a] = x[a] + half;
    } else {
      b.lo[a] = std::max(lo_g, x[a] - half);
      b.hi[a] = std::min(hi_g, x[a] + half);
      clip = clip || b.lo[a] > x[a] - half || b.hi[a] < x[a] + half;
    }
  }
  const double top = g.origin(d - 1) + g.extent(d - 1);
  b.lo[d - 1] = 0.0;
  b.hi[d - 1] = std::min(R, top);
  clip = clip || R > top;
  if (clipped) *clipped = clip;
  return b;
}

std::vector<double> carleson_density(const ScalarField& u) {
  const Grid& g = u.grid;
  const int d = g.dim();
  const VectorField grad = gradient(u);
  std::vector<double> out(g.num_cells());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec v = grad.at(c);
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += v[a] * v[a];
    out[c] = g.cell_center(c)[d - 1] * s;
  }
  return out;
}

CarlesonValue carleson_functional(const Grid& g, std::span<const double> density, const Tent& tent) {
  CarlesonValue v;
  const Box r = tent.region(g, &v.clipped);
  v.raw = integrate(g, density, r);
  v.normalized = v.raw / std::pow(tent.R, g.dim() - 1);
  return v;
}

CarlesonValue carleson_functional(const ScalarField& u, const Tent& tent) {
  return carleson_functional(u.grid, carleson_density(u), tent);
}

namespace {

std::vector<double> centers_along(const Grid& g, int a, double R) {
  std::vector<double> out;
  const double step = 0.5 * R;
  const double o = g.origin(a), ext = g.extent(a);
  if (g.periodic(a)) {
    const int n = std::max(1, static_cast<int>(std::ceil(ext / step - 1e-9)));
    for (int m = 0; m < n; ++m) out.push_back(o + m * step);
  } else if (R >= ext) {
    out.push_back(o + 0.5 * ext);
  } else {
    for (double x = o + 0.5 * R; x <= o + ext - 0.5 * R + 1e-12; x += step) out.push_back(x);
  }
  return out;
}

}  // namespace

CarlesonReport carleson_sup(const ScalarField& u, const std::vector<double>& radii, double band_top) {
  const Grid& g = u.grid;
  const int d = g.dim();
  const std::vector<double> density = carleson_density(u);
  CarlesonReport rep;
  for (double R : radii) {
    std::array<std::vector<double>, kMaxDim - 1> axes;
    std::size_t count = 1;
    for (int a = 0; a + 1 < d; ++a) {
      axes[a] = centers_along(g, a, R);
      count *= axes[a].size();
    }
    double best = 0.0;
    for (std::size_t m = 0; m < count; ++m) {
      Tent tent;
      tent.R = R;
      std::size_t r = m;
      for (int a = 0; a + 1 < d; ++a) {
        tent.x[a] = axes[a][r % axes[a].size()];
        r /= axes[a].size();
      }
      CarlesonRow row;
      row.tent = tent;
      const Box region = tent.region(g, &row.clipped);
      row.raw = integrate(g, density, region);
      row.normalized = row.raw / std::pow(R, d - 1);
      if (band_top > 0.0) {
        Box low = region;
        low.hi[d - 1] = std::min(low.hi[d - 1], band_top);
        row.sub_band = integrate(g, density, low);
      }
      best = std::max(best, row.normalized);
      rep.rows.push_back(row);
    }
    rep.per_radius.emplace_back(R, best);
  }
  double lo = INFINITY, hi = 0.0;
  for (const auto& [R, v] : rep.per_radius) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  rep.sup = hi;
  rep.ratio = rep.per_radius.empty() ? 0.0 : (lo > 0.0 ? hi / lo : (hi > 0.0 ? INFINITY : 1.0));
  return rep;
}

namespace {

std::size_t cell_at(const Grid& g, const Vec& p) {
  Index m{};
  for (int a = 0; a < g.dim(); ++a) {
    long i = static_cast<long>(std::floor((p[a] - g.origin(a)) / g.h(a)));
    const long n = g.cells(a);
    if (g.periodic(a)) {
      i %= n;
      if (i < 0) i += n;
    } else {
      i = std::clamp(i, 0L, n - 1);
    }
    m[a] = static_cast<int>(i);
  }
  return g.cell_index(m);
}

double pairwise_sup(std::vector<SymMat>& ms) {
  std::vector<SymMat> uniq;
  for (const auto& m : ms)
    if (std::find(uniq.begin(), uniq.end(), m) == uniq.end()) uniq.push_back(m);
  double s = 0.0;
  for (std::size_t i = 0; i < uniq.size(); ++i)
    for (std::size_t j = i + 1; j < uniq.size(); ++j) s = std::max(s, (uniq[i] - uniq[j]).operator_norm());
  return s;
}

}  // namespace

double dkp_alpha(const MatrixField& A, const Vec& Z) {
  const Grid& g = A.grid();
  const int d = g.dim();
  for (int a = 0; a < d; ++a) {
    const bool inside = Z[a] >= g.origin(a) && Z[a] <= g.origin(a) + g.extent(a);
    if (!inside && !(g.periodic(a))) throw ConfigError("dkp_alpha: point outside the grid");
  }
  const double t = Z[d - 1];
  if (!(t > 0.0)) throw ConfigError("dkp_alpha: point must lie above the boundary");
  const double rho = 0.5 * t;
  const double ball = d == 2 ? std::numbers::pi * rho * rho : 4.0 / 3.0 * std::numbers::pi * rho * rho * rho;
  std::vector<SymMat> ms;
  ms.reserve(kDkpSamples + 1);
  if (ball / g.cell_volume() <= kDkpSamples) {
    // Enumerate cells of the bounding box whose centers fall in the ball.
    Index lo{}, hi{};
    for (int a = 0; a < d; ++a) {
      lo[a] = static_cast<int>(std::floor((Z[a] - rho - g.origin(a)) / g.h(a)));
      hi[a] = static_cast<int>(std::floor((Z[a] + rho - g.origin(a)) / g.h(a)));
    }
    Index m = lo;
    while (true) {
      Vec p{};
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        p[a] = g.origin(a) + (m[a] + 0.5) * g.h(a);
        r2 += (p[a] - Z[a]) * (p[a] - Z[a]);
      }
      bool in_grid = true;
      for (int a = 0; a < d; ++a)
        if (!g.periodic(a) && (m[a] < 0 || m[a] >= g.cells(a))) in_grid = false;
      if (in_grid && r2 <= rho * rho) ms.push_back(A.at(cell_at(g, p)));
      int a = 0;
      for (; a < d; ++a) {
        if (++m[a] <= hi[a]) break;
        m[a] = lo[a];
      }
      if (a == d) break;
    }
    if (ms.empty()) ms.push_back(A.at(cell_at(g, Z)));
  } else {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int m = 0; m < kDkpSamples; ++m) {
      const double f = (m + 0.5) / kDkpSamples;
      Vec p = Z;
      if (d == 2) {
        const double r = rho * std::sqrt(f);
        p[0] += r * std::cos(m * golden);
        p[1] += r * std::sin(m * golden);
      } else {
        const double r = rho * std::cbrt(f);
        const double z = 1.0 - 2.0 * f;
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        p[0] += r * s * std::cos(m * golden);
        p[1] += r * s * std::sin(m * golden);
        p[2] += r * z;
      }
      ms.push_back(A.at(cell_at(g, p)));
    }
  }
  return pairwise_sup(ms);
}

std::vector<DkpSlab> DkpReport::generations(int K) const {
  std::vector<DkpSlab> out;
  for (int k = -1; k >= -K; --k)
    for (const auto& s : slabs)
      if (s.k == k) out.push_back(s);
  return out;
}

DkpReport dkp_carleson_integral(const MatrixField& A, const Tent& tent) {
  const Grid& g = A.grid();
  const int d = g.dim();
  std::map<int, double> slabs;
  for_each_overlap(g, tent.region(g), [&](std::size_t c, double w) {
    const Vec p = g.cell_center(c);
    const double t = p[d - 1];
    const double alpha = dkp_alpha(A, p);
    slabs[generation_of(t)] += alpha * alpha / t * w;
  });
  DkpReport rep;
  for (const auto& [k, v] : slabs) {
    rep.slabs.push_back({k, v});
    rep.total += v;
  }
  return rep;
}

const CorrectorSet& ExpansionContext::correctors_for(const WhitneyBox& b) const {
  const auto& label = spec->assignment.label_for(b.k, b.j, spec->dim - 1);
  const auto it = correctors->find(label);
  if (it == correctors->end()) throw ConfigError("missing correctors for template '" + label + "'");
  return it->second;
}

std::vector<Vec> nodal_gradient(const ScalarField& u) {
  const Grid& g = u.grid;
  const int d = g.dim();
  const VectorField grad = gradient(u);
  std::vector<Vec> out(g.num_nodes(), Vec{});
  std::vector<int> count(g.num_nodes(), 0);
  std::array<std::size_t, 8> nodes{};
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    g.cell_nodes(c, {nodes.data(), static_cast<std::size_t>(g.corners())});
    const Vec v = grad.at(c);
    for (int m = 0; m < g.corners(); ++m) {
      for (int a = 0; a < d; ++a) out[nodes[m]][a] += v[a];
      ++count[nodes[m]];
    }
  }
  for (std::size_t n = 0; n < out.size(); ++n)
    for (int a = 0; a < d; ++a) out[n][a] /= count[n];
  return out;
}

std::vector<SymMat> cell_hessian(const ScalarField& u, const MatrixField& pieces) {
  const Grid& g = u.grid;
  const int d = g.dim();
  const VectorField grad = gradient(u);
  std::vector<SymMat> out(g.num_cells(), SymMat(d));
  auto neighbour = [&](Index m, int b, int step, std::size_t& id) {
    m[b] += step;
    if (m[b] < 0 || m[b] >= g.cells(b)) {
      if (!g.periodic(b)) return false;
      m[b] = (m[b] + g.cells(b)) % g.cells(b);
    }
    id = g.cell_index(m);
    return true;
  };
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Index m = g.cell_multi(c);
    const SymMat here = pieces.at(c);
    const Vec gc = grad.at(c);
    double h[kMaxDim][kMaxDim] = {};
    for (int b = 0; b < d; ++b) {
      std::size_t lo = 0, hi = 0;
      const bool has_lo = neighbour(m, b, -1, lo) && pieces.at(lo) == here;
      const bool has_hi = neighbour(m, b, +1, hi) && pieces.at(hi) == here;
      Vec dg{};
      if (has_lo && has_hi) {
        const Vec gl = grad.at(lo), gh = grad.at(hi);
        for (int a = 0; a < d; ++a) dg[a] = (gh[a] - gl[a]) / (2.0 * g.h(b));
      } else if (has_hi) {
        const Vec gh = grad.at(hi);
        for (int a = 0; a < d; ++a) dg[a] = (gh[a] - gc[a]) / g.h(b);
      } else if (has_lo) {
        const Vec gl = grad.at(lo);
        for (int a = 0; a < d; ++a) dg[a] = (gc[a] - gl[a]) / g.h(b);
      }
      for (int a = 0; a < d; ++a) h[a][b] = dg[a];
    }
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b) out[c].set(a, b, 0.5 * (h[a][b] + h[b][a]));
  }
  return out;
}

namespace {

Vec local_coordinates(const Vec& p, const WhitneyBox& b, int d) {
  const double period = b.side() * b.eps;
  Vec y{};
  for (int a = 0; a < d; ++a) y[a] = p[a] / period;
  return y;
}

}  // namespace

ScalarField two_scale_expand(const ScalarField& ubar, const ExpansionContext& ctx) {
  const Grid& g = ubar.grid;
  const int d = g.dim();
  const std::vector<Vec> grad = nodal_gradient(ubar);
  ScalarField out = ubar;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const Vec p = g.node_point(n);
    const WhitneyBox* b = ctx.layout->locate(p);
    if (!b) continue;
    const double chi = cutoff_value(*b, d, ctx.layout->x_extent, p);
    if (chi == 0.0) continue;
    const CorrectorSet& cs = ctx.correctors_for(*b);
    const Vec y = local_coordinates(p, *b, d);
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += interpolate(cs.phi[i], y) * grad[n][i];
    out[n] += b->side() * b->eps * chi * s;
  }
  return out;
}

VectorField expansion_flux(const MatrixField& A, const MatrixField& Abar, const ScalarField& u2s,
                           const ScalarField& ubar) {
  const Grid& g = A.grid();
  const VectorField g2 = gradient_at_gauss(u2s);
  const VectorField gb = gradient_at_gauss(ubar);
  VectorField out = VectorField::gauss(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const SymMat a = A.at(c), ab = Abar.at(c);
    for (int q = 0; q < out.points_per_cell; ++q) {
      const Vec f1 = a.apply(g2.at(c, q));
      const Vec f2 = ab.apply(gb.at(c, q));
      Vec f{};
      for (int k = 0; k < g.dim(); ++k) f[k] = f1[k] - f2[k];
      out.set(c, q, f);
    }
  }
  return out;
}

VectorField error_flux(const MatrixField& A, const MatrixField& Abar, const ScalarField& ubar,
                       const ExpansionContext& ctx) {
  const Grid& g = A.grid();
  const int d = g.dim();
  const VectorField grad = gradient(ubar);
  const std::vector<SymMat> hess = cell_hessian(ubar, Abar);
  VectorField out = VectorField::centered(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec p = g.cell_center(c);
    const SymMat a = A.at(c);
    const Vec gu = grad.at(c);
    const WhitneyBox* b = ctx.layout->locate(p);
    const double chi = b ? cutoff_value(*b, d, ctx.layout->x_extent, p) : 0.0;
    Vec f{};
    // (1 - chi)(A - Abar) grad ubar
    const Vec d1 = (a - Abar.at(c)).apply(gu);
    for (int k = 0; k < d; ++k) f[k] = (1.0 - chi) * d1[k];
    if (b && chi > 0.0) {
      const Vec dchi = cutoff_gradient(*b, d, ctx.layout->x_extent, p);
      const CorrectorSet& cs = ctx.correctors_for(*b);
      const Vec y = local_coordinates(p, *b, d);
      const double scale = b->side() * b->eps;
      const std::size_t pairs = cs.sigma[0].size();
      for (int i = 0; i < d; ++i) {
        Vec gi{};
        for (int k = 0; k < d; ++k) gi[k] = dchi[k] * gu[i] + chi * hess[c](i, k);
        const double phi = interpolate(cs.phi[i], y);
        const Vec agi = a.apply(gi);
        std::array<double, 3> sig{};
        for (std::size_t s = 0; s < pairs; ++s) sig[s] = interpolate(cs.sigma[i][s], y);
        for (int j = 0; j < d; ++j) {
          double sg = 0.0;
          for (int k = 0; k < d; ++k)
            if (k != j) sg += pair_sign(j, k) * sig[pair_index(d, j, k)] * gi[k];
          f[j] += scale * (phi * agi[j] - sg);
        }
      }
    }
    out.set(c, 0, f);
  }
  return out;
}

namespace {

bool box_meets(const WhitneyBox& b, const WhitneyLayout& l, const Box& r) {
  const int d = l.dim;
  const Box w = b.box(d);
  if (!(w.lo[d - 1] < r.hi[d - 1] && r.lo[d - 1] < w.hi[d - 1])) return false;
  for (int a = 0; a + 1 < d; ++a) {
    const double width = r.hi[a] - r.lo[a];
    if (width >= l.x_extent) continue;
    const double rc = 0.5 * (r.lo[a] + r.hi[a]);
    const double wc = 0.5 * (w.lo[a] + w.hi[a]);
    if (std::abs(wrapped_offset(wc, rc, l.x_extent)) >= 0.5 * (width + b.side())) return false;
  }
  return true;
}

}  // namespace

ErrorBudget error_budget(const ScalarField& u, const ScalarField& ubar, const ScalarField& u2s,
                         const MatrixField& A, const MatrixField& Abar,
                         const ExpansionContext& ctx, const Tent& tent,
                         std::vector<BoxBudget>* rows) {
  const Grid& g = u.grid;
  const int d = g.dim();
  if (!ubar.grid.same_layout(g) || !u2s.grid.same_layout(g) || !A.grid().same_layout(g))
    throw ConfigError("error_budget: fields live on different grids");
  ErrorBudget eb;

  const VectorField gb = gradient(ubar);
  const std::vector<SymMat> hess = cell_hessian(ubar, Abar);
  std::vector<double> grad_sq(g.num_cells());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec v = gb.at(c);
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += v[a] * v[a];
    grad_sq[c] = s;
  }

  const Tent big{tent.x, 2.0 * tent.R};
  const Box r2 = big.region(g);
  for (std::size_t i = 0; i < ctx.layout->boxes.size(); ++i) {
    const WhitneyBox& b = ctx.layout->boxes[i];
    if (!box_meets(b, *ctx.layout, r2)) continue;
    ++eb.boxes;
    BoxBudget row{i, 0.0, 0.0};
    // A equals its homogenized value on a constant box: no correction, no layer.
    if (ctx.correctors_for(b).def.kind == TemplateDef::Kind::constant) {
      if (rows) rows->push_back(row);
      continue;
    }
    const double scale = b.side() * b.eps;
    double bulk = 0.0;
    for_each_overlap(g, b.box(d), [&](std::size_t c, double w) {
      const double chi = cutoff_value(b, d, ctx.layout->x_extent, g.cell_center(c));
      if (chi == 0.0) return;
      double h2 = 0.0;
      for (int a = 0; a < d; ++a)
        for (int k = 0; k < d; ++k) h2 += hess[c](a, k) * hess[c](a, k);
      bulk += chi * chi * h2 * w;
    });
    row.bulk = scale * scale * bulk;
    const double shell = integrate(g, grad_sq, b.box(d)) - integrate(g, grad_sq, b.shrunk(d, b.eta));
    const double ratio = b.eps / b.eta;
    row.layer = (1.0 + ratio * ratio) * std::max(0.0, shell);
    eb.bulk += row.bulk;
    eb.layer += row.layer;
    if (rows) rows->push_back(row);
  }
  eb.total = eb.bulk + eb.layer;

  const VectorField f = error_flux(A, Abar, ubar, ctx);
  std::vector<double> f_sq(g.num_cells());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec v = f.at(c);
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += v[a] * v[a];
    f_sq[c] = s;
  }
  eb.flux_sq = integrate(g, f_sq, r2);

  ScalarField z = ScalarField::nodal(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) z[n] = u[n] - u2s[n];
  const VectorField gz = gradient(z);
  std::vector<double> gz_sq(g.num_cells()), z_sq(g.num_cells());
  std::array<std::size_t, 8> nodes{};
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec v = gz.at(c);
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += v[a] * v[a];
    gz_sq[c] = s;
    g.cell_nodes(c, {nodes.data(), static_cast<std::size_t>(g.corners())});
    double zc = 0.0;
    for (int m = 0; m < g.corners(); ++m) zc += z[nodes[m]];
    zc /= g.corners();
    z_sq[c] = zc * zc;
  }
  eb.z_energy = integrate(g, gz_sq, tent.region(g));
  eb.z_energy_weighted = std::min(tent.R, 1.0) * eb.z_energy;
  eb.z_mass = integrate(g, z_sq, r2) / (tent.R * tent.R);
  return eb;
}

}  // namespace homlab
