#include "homlab/linalg.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "homlab/errors.hpp"

namespace homlab {

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  for (std::size_t k = row_start[i]; k < row_start[i + 1]; ++k)
    if (col[k] == j) return val[k];
  return 0.0;
}

namespace {

// One-dimensional Q1 integrals on [0,h] between basis functions with bits b1, b2.
double integral_1d(int b1, bool d1, int b2, bool d2, double h) {
  const double s1 = b1 ? 1.0 : -1.0;
  const double s2 = b2 ? 1.0 : -1.0;
  if (d1 && d2) return s1 * s2 / h;
  if (d1) return 0.5 * s1;
  if (d2) return 0.5 * s2;
  return (b1 == b2) ? h / 3.0 : h / 6.0;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void remove_mean(std::span<double> v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

}  // namespace

Q1Operator::Q1Operator(const MatrixField& coefficient) : a_(&coefficient) {
  const Grid& g = grid();
  fixed_.assign(g.num_nodes(), 0);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) fixed_[n] = g.is_boundary_node(n) ? 1 : 0;

  const int d = g.dim();
  const int nc = g.corners();
  ref_.assign(static_cast<std::size_t>(packed_size(d)) * nc * nc, 0.0);
  int slot = 0;
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b, ++slot) {
      for (int m = 0; m < nc; ++m) {
        for (int n = 0; n < nc; ++n) {
          auto term = [&](int da, int db) {
            double v = 1.0;
            for (int c = 0; c < d; ++c)
              v *= integral_1d((m >> c) & 1, c == da, (n >> c) & 1, c == db, g.h(c));
            return v;
          };
          const double e = (a == b) ? term(a, a) : term(a, b) + term(b, a);
          ref_[(static_cast<std::size_t>(slot) * nc + m) * nc + n] = e;
        }
      }
    }
  }
}

void Q1Operator::element_matrix(std::size_t cell, std::span<double> ke) const {
  const int d = grid().dim();
  const int nc = grid().corners();
  const std::span<const double> coef = a_->packed().subspan(cell * a_->stride(), a_->stride());
  std::fill(ke.begin(), ke.begin() + nc * nc, 0.0);
  for (int s = 0; s < packed_size(d); ++s) {
    const double* e = ref_.data() + static_cast<std::size_t>(s) * nc * nc;
    for (int k = 0; k < nc * nc; ++k) ke[k] += coef[s] * e[k];
  }
}

void Q1Operator::apply_full_2d(std::span<const double> x, std::span<double> y) const {
  // On a cell, u = u_c + g.(p - c) + d (p-c)_0 (p-c)_1 and the exact integral of
  // A grad u . grad v splits into |c| g_u . A g_v plus a decoupled hourglass
  // term d_u d_v |c| (a00 hy^2 + a11 hx^2) / 12.
  const Grid& g = grid();
  const int nx = g.cells(0), ny = g.cells(1), sx = g.nodes(0), sy = g.nodes(1);
  const double hx = g.h(0), hy = g.h(1);
  const double* A = a_->packed().data();
  std::fill(y.begin(), y.end(), 0.0);
  for (int j = 0; j < ny; ++j) {
    const std::size_t r0 = static_cast<std::size_t>(j) * sx;
    const std::size_t r1 = static_cast<std::size_t>(j + 1 == sy ? 0 : j + 1) * sx;
    const double* Arow = A + static_cast<std::size_t>(j) * nx * 3;
    for (int i = 0; i < nx; ++i) {
      const int i1 = (i + 1 == sx) ? 0 : i + 1;
      const std::size_t n00 = r0 + i, n10 = r0 + i1, n01 = r1 + i, n11 = r1 + i1;
      const double u00 = x[n00], u10 = x[n10], u01 = x[n01], u11 = x[n11];
      const double a00 = Arow[3 * i], a01 = Arow[3 * i + 1], a11 = Arow[3 * i + 2];
      const double gx = 0.5 * ((u10 - u00) + (u11 - u01)) / hx;
      const double gy = 0.5 * ((u01 - u00) + (u11 - u10)) / hy;
      const double dd = (u00 - u10 - u01 + u11) / (hx * hy);
      const double p = 0.5 * hy * (a00 * gx + a01 * gy);
      const double q = 0.5 * hx * (a01 * gx + a11 * gy);
      const double hg = (a00 * hy * hy + a11 * hx * hx) / 12.0 * dd;
      y[n00] += -p - q + hg;
      y[n10] += p - q - hg;
      y[n01] += -p + q - hg;
      y[n11] += p + q + hg;
    }
  }
}

void Q1Operator::apply_full_generic(std::span<const double> x, std::span<double> y) const {
  const Grid& g = grid();
  const int nc = g.corners();
  std::array<std::size_t, 8> ids{};
  std::array<double, 64> ke{};
  std::array<double, 8> xl{};
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    g.cell_nodes(c, ids);
    element_matrix(c, ke);
    for (int m = 0; m < nc; ++m) xl[m] = x[ids[m]];
    for (int m = 0; m < nc; ++m) {
      double s = 0.0;
      for (int n = 0; n < nc; ++n) s += ke[m * nc + n] * xl[n];
      y[ids[m]] += s;
    }
  }
}

void Q1Operator::apply_full(std::span<const double> x, std::span<double> y) const {
  if (grid().dim() == 2)
    apply_full_2d(x, y);
  else
    apply_full_generic(x, y);
}

void Q1Operator::apply(std::span<const double> x, std::span<double> y) const {
  apply_full(x, y);
  for (std::size_t n = 0; n < y.size(); ++n)
    if (fixed_[n]) y[n] = 0.0;
}

std::vector<double> Q1Operator::diagonal() const {
  const Grid& g = grid();
  const int nc = g.corners();
  std::vector<double> diag(g.num_nodes(), 0.0);
  std::array<std::size_t, 8> ids{};
  std::array<double, 64> ke{};
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    g.cell_nodes(c, ids);
    element_matrix(c, ke);
    for (int m = 0; m < nc; ++m) diag[ids[m]] += ke[m * nc + m];
  }
  for (std::size_t n = 0; n < diag.size(); ++n)
    if (fixed_[n]) diag[n] = 1.0;
  return diag;
}

double Q1Operator::energy(std::span<const double> x) const {
  std::vector<double> kx(x.size());
  apply_full(x, kx);
  return dot(x, kx);
}

CsrMatrix Q1Operator::assemble() const {
  const Grid& g = grid();
  const int nc = g.corners();
  std::vector<std::map<std::size_t, double>> rows(g.num_nodes());
  std::array<std::size_t, 8> ids{};
  std::array<double, 64> ke{};
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    g.cell_nodes(c, ids);
    element_matrix(c, ke);
    for (int m = 0; m < nc; ++m)
      for (int n = 0; n < nc; ++n) rows[ids[m]][ids[n]] += ke[m * nc + n];
  }
  CsrMatrix k;
  k.rows = rows.size();
  k.row_start.push_back(0);
  for (const auto& r : rows) {
    for (const auto& [j, v] : r) {
      k.col.push_back(j);
      k.val.push_back(v);
    }
    k.row_start.push_back(k.col.size());
  }
  return k;
}

JacobiPreconditioner::JacobiPreconditioner(const Q1Operator& op) : fixed_(op.dirichlet_mask()) {
  inv_diag_ = op.diagonal();
  for (double& d : inv_diag_) d = 1.0 / d;
}

void JacobiPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
  for (std::size_t i = 0; i < r.size(); ++i) z[i] = fixed_[i] ? 0.0 : inv_diag_[i] * r[i];
}

struct SpectralPreconditioner::Plan {
  fftw_plan plan = nullptr;
  double* buffer = nullptr;
  std::size_t n = 0;

  ~Plan() {
    if (plan) fftw_destroy_plan(plan);
    if (buffer) fftw_free(buffer);
  }
};

SpectralPreconditioner::SpectralPreconditioner(const Grid& g, const Vec& diagonal_coefficient)
    : grid_(g), plan_(std::make_unique<Plan>()) {
  const int d = g.dim();
  // Free-node extents per axis; FFTW wants the slowest axis first.
  std::array<int, kMaxDim> len{};
  std::array<int, kMaxDim> fftw_n{};
  std::array<fftw_r2r_kind, kMaxDim> kinds{};
  double norm = 1.0;
  for (int a = 0; a < d; ++a) {
    len[a] = g.periodic(a) ? g.cells(a) : g.cells(a) - 1;
    fftw_n[d - 1 - a] = len[a];
    kinds[d - 1 - a] = g.periodic(a) ? FFTW_DHT : FFTW_RODFT00;
    norm *= g.periodic(a) ? len[a] : 2.0 * g.cells(a);
  }

  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(len[a]);
  free_nodes_.reserve(total);
  for (std::size_t n = 0; n < g.num_nodes(); ++n)
    if (!g.is_boundary_node(n)) free_nodes_.push_back(n);
  if (free_nodes_.size() != total) throw ConfigError("spectral preconditioner: unexpected node layout");

  // Per-axis 1-D stiffness and mass eigenvalues.
  std::array<std::vector<double>, kMaxDim> kap, mu;
  for (int a = 0; a < d; ++a) {
    const double h = g.h(a);
    kap[a].resize(len[a]);
    mu[a].resize(len[a]);
    for (int m = 0; m < len[a]; ++m) {
      const double theta = g.periodic(a) ? 2.0 * M_PI * m / g.cells(a)
                                         : M_PI * (m + 1) / g.cells(a);
      kap[a][m] = 2.0 / h * (1.0 - std::cos(theta));
      mu[a][m] = h / 3.0 * (2.0 + std::cos(theta));
    }
  }

  inv_eig_.resize(total);
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t rest = k;
    Index m{};
    for (int a = 0; a < d; ++a) {
      m[a] = static_cast<int>(rest % len[a]);
      rest /= len[a];
    }
    double lam = 0.0;
    for (int a = 0; a < d; ++a) {
      double term = diagonal_coefficient[a] * kap[a][m[a]];
      for (int b = 0; b < d; ++b)
        if (b != a) term *= mu[b][m[b]];
      lam += term;
    }
    inv_eig_[k] = lam > 0.0 ? 1.0 / (lam * norm) : 0.0;
  }
  const bool all_periodic = [&] {
    for (int a = 0; a < d; ++a)
      if (!g.periodic(a)) return false;
    return true;
  }();
  // Constant mode of a fully periodic grid: pseudo-inverse.
  if (all_periodic) inv_eig_[0] = 0.0;

  plan_->n = total;
  plan_->buffer = static_cast<double*>(fftw_malloc(sizeof(double) * total));
  // FFTW_ESTIMATE keeps plans, hence roundoff, reproducible from run to run.
  plan_->plan = fftw_plan_r2r(d, fftw_n.data(), plan_->buffer, plan_->buffer, kinds.data(),
                              FFTW_ESTIMATE);
  if (!plan_->plan) throw ConfigError("FFTW could not create a transform plan");
}

SpectralPreconditioner::~SpectralPreconditioner() = default;

void SpectralPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
  double* buf = plan_->buffer;
  for (std::size_t k = 0; k < free_nodes_.size(); ++k) buf[k] = r[free_nodes_[k]];
  fftw_execute(plan_->plan);
  for (std::size_t k = 0; k < free_nodes_.size(); ++k) buf[k] *= inv_eig_[k];
  fftw_execute(plan_->plan);
  std::fill(z.begin(), z.end(), 0.0);
  for (std::size_t k = 0; k < free_nodes_.size(); ++k) z[free_nodes_[k]] = buf[k];
}

PreconditionerKind parse_preconditioner(const std::string& name) {
  if (name == "jacobi") return PreconditionerKind::jacobi;
  if (name == "spectral") return PreconditionerKind::spectral;
  throw ConfigError("unknown preconditioner '" + name + "' (expected jacobi or spectral)");
}

std::string to_string(PreconditionerKind k) {
  return k == PreconditionerKind::jacobi ? "jacobi" : "spectral";
}

std::unique_ptr<Preconditioner> make_preconditioner(PreconditionerKind kind, const Q1Operator& op) {
  if (kind == PreconditionerKind::jacobi) return std::make_unique<JacobiPreconditioner>(op);
  const Grid& g = op.grid();
  const int d = g.dim();
  const auto packed = op.coefficient().packed();
  const std::size_t stride = op.coefficient().stride();
  Vec mean{};
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    int slot = 0;
    for (int a = 0; a < d; ++a) {
      mean[a] += packed[c * stride + slot];
      slot += d - a;
    }
  }
  for (int a = 0; a < d; ++a) mean[a] /= static_cast<double>(g.num_cells());
  return std::make_unique<SpectralPreconditioner>(g, mean);
}

int default_max_iterations(const Grid& g) {
  int m = 0;
  for (int a = 0; a < g.dim(); ++a) m = std::max(m, g.cells(a));
  return 20 * m;
}

CgResult pcg(const LinearOperator& op, const Preconditioner& precond, std::span<const double> b,
             std::span<double> x, const CgOptions& opts, int default_max) {
  const std::size_t n = op.size();
  const int max_it = opts.max_iterations > 0 ? opts.max_iterations : default_max;
  std::vector<double> r(n), z(n), p(n), q(n);
  std::vector<double> rhs(b.begin(), b.end());
  if (opts.zero_mean) {
    remove_mean(rhs);
    remove_mean(x);
  }

  CgResult res;
  const double bnorm = std::sqrt(dot(rhs, rhs));
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }

  auto true_residual = [&] {
    op.apply(x, q);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
    if (opts.zero_mean) remove_mean(r);
    return std::sqrt(dot(r, r)) / bnorm;
  };

  res.rel_residual = true_residual();
  int it = 0;
  // Outer loop replaces the recursive residual by the true one whenever the
  // recursion claims convergence, so success always means ||b - Kx|| <= tol ||b||.
  while (res.rel_residual > opts.rel_tol && it < max_it) {
    precond.apply(r, z);
    if (opts.zero_mean) remove_mean(z);
    std::copy(z.begin(), z.end(), p.begin());
    double rz = dot(r, z);
    bool recursive_converged = false;
    while (it < max_it) {
      op.apply(p, q);
      const double pq = dot(p, q);
      ++it;
      if (!std::isfinite(pq) || pq <= 0.0) {
        res.iterations = it;
        res.finite = std::isfinite(pq);
        res.rel_residual = true_residual();
        return res;
      }
      const double alpha = rz / pq;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
      }
      if (opts.zero_mean) remove_mean(x);
      const double rel = std::sqrt(dot(r, r)) / bnorm;
      if (!std::isfinite(rel)) {
        res.iterations = it;
        res.finite = false;
        res.rel_residual = rel;
        return res;
      }
      if (rel <= opts.rel_tol) {
        recursive_converged = true;
        break;
      }
      precond.apply(r, z);
      if (opts.zero_mean) remove_mean(z);
      const double rz_new = dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    res.rel_residual = true_residual();
    if (!recursive_converged) break;
  }
  res.iterations = it;
  res.finite = std::isfinite(res.rel_residual);
  res.converged = res.finite && res.rel_residual <= opts.rel_tol;
  return res;
}

std::vector<double> flux_load(const VectorField& flux) {
  const Grid& g = flux.grid;
  const int d = g.dim();
  const int nc = g.corners();
  std::vector<double> b(g.num_nodes(), 0.0);
  std::array<std::size_t, 8> nodes{};
  // Shape-function gradients at each point, [point][corner][axis].
  std::vector<double> dphi(static_cast<std::size_t>(flux.points_per_cell) * nc * d);
  for (int p = 0; p < flux.points_per_cell; ++p) {
    Vec xi{};
    for (int a = 0; a < d; ++a)
      xi[a] = flux.points_per_cell == 1 ? 0.5 : gauss_offset((p >> a) & 1);
    for (int m = 0; m < nc; ++m) {
      for (int a = 0; a < d; ++a) {
        double v = ((m >> a) & 1) ? 1.0 / g.h(a) : -1.0 / g.h(a);
        for (int c = 0; c < d; ++c)
          if (c != a) v *= ((m >> c) & 1) ? xi[c] : 1.0 - xi[c];
        dphi[(static_cast<std::size_t>(p) * nc + m) * d + a] = v;
      }
    }
  }
  const double w = g.cell_volume() / flux.points_per_cell;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    g.cell_nodes(c, {nodes.data(), static_cast<std::size_t>(nc)});
    for (int p = 0; p < flux.points_per_cell; ++p) {
      const double* f = flux.values.data() + flux.offset(c, p);
      for (int m = 0; m < nc; ++m) {
        const double* gp = dphi.data() + (static_cast<std::size_t>(p) * nc + m) * d;
        double s = 0.0;
        for (int a = 0; a < d; ++a) s += f[a] * gp[a];
        b[nodes[m]] -= w * s;
      }
    }
  }
  return b;
}

}  // namespace homlab
