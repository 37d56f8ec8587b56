#include "homlab/cell.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "homlab/errors.hpp"
#include "homlab/field_io.hpp"

namespace homlab {

namespace {

double wrap01(double y) {
  double f = y - std::floor(y);
  return f >= 1.0 ? 0.0 : f;
}

int block(double y, int n) { return std::min(n - 1, static_cast<int>(wrap01(y) * n)); }

void put_matrix(std::ostringstream& os, const SymMat& m) {
  os << '[';
  for (double v : m.packed()) os << v << ',';
  os << ']';
}

Eigen::MatrixXd dense(const SymMat& m) {
  const int d = m.dim();
  Eigen::MatrixXd out(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = m(i, j);
  return out;
}

SymMat from_dense(const Eigen::MatrixXd& m) {
  SymMat out(static_cast<int>(m.rows()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = i; j < m.cols(); ++j) out.set(i, j, 0.5 * (m(i, j) + m(j, i)));
  return out;
}

double l2_norm_cells(const Grid& g, std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s * g.cell_volume());
}

}  // namespace

SymMat TemplateDef::at(const Vec& y) const {
  switch (kind) {
    case Kind::constant:
      return matrix;
    case Kind::laminate:
      return pieces[block(y[axis], static_cast<int>(pieces.size()))];
    case Kind::checkerboard: {
      int s = 0;
      for (int a = 0; a < dim; ++a) s += block(y[a], divisions);
      return s % 2 == 0 ? even : odd;
    }
    case Kind::smooth: {
      double p = 1.0;
      for (int a = 0; a < dim; ++a) p *= std::cos(2.0 * std::numbers::pi * y[a]);
      return SymMat::identity(dim, mean + amplitude * p);
    }
    case Kind::table: {
      std::size_t idx = 0, stride = 1;
      for (int a = 0; a < dim; ++a) {
        idx += static_cast<std::size_t>(block(y[a], divisions)) * stride;
        stride *= static_cast<std::size_t>(divisions);
      }
      return pieces[idx];
    }
  }
  return matrix;
}

std::string TemplateDef::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << to_string(kind) << ";dim=" << dim << ';';
  switch (kind) {
    case Kind::constant:
      put_matrix(os, matrix);
      break;
    case Kind::laminate:
      os << "axis=" << axis << ';';
      for (const auto& m : pieces) put_matrix(os, m);
      break;
    case Kind::checkerboard:
      os << "div=" << divisions << ';';
      put_matrix(os, even);
      put_matrix(os, odd);
      break;
    case Kind::smooth:
      os << "mean=" << mean << ";amp=" << amplitude;
      break;
    case Kind::table:
      os << "div=" << divisions << ';';
      for (const auto& m : pieces) put_matrix(os, m);
      break;
  }
  return os.str();
}

std::pair<double, double> TemplateDef::eigen_range() const {
  std::vector<SymMat> ms;
  switch (kind) {
    case Kind::constant:
      ms = {matrix};
      break;
    case Kind::laminate:
    case Kind::table:
      ms = pieces;
      break;
    case Kind::checkerboard:
      ms = {even, odd};
      break;
    case Kind::smooth:
      return {mean - std::abs(amplitude), mean + std::abs(amplitude)};
  }
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& m : ms) {
    const Vec e = m.eigenvalues();
    lo = std::min(lo, e[0]);
    hi = std::max(hi, e[m.dim() - 1]);
  }
  return {lo, hi};
}

std::string to_string(TemplateDef::Kind k) {
  switch (k) {
    case TemplateDef::Kind::constant: return "constant";
    case TemplateDef::Kind::laminate: return "laminate";
    case TemplateDef::Kind::checkerboard: return "checkerboard";
    case TemplateDef::Kind::smooth: return "smooth";
    case TemplateDef::Kind::table: return "table";
  }
  return "constant";
}

TemplateDef::Kind parse_template_kind(const std::string& name) {
  for (auto k : {TemplateDef::Kind::constant, TemplateDef::Kind::laminate,
                 TemplateDef::Kind::checkerboard, TemplateDef::Kind::smooth,
                 TemplateDef::Kind::table})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown template type '" + name + "'");
}

TemplateDef random_checkerboard(int dim, int divisions, double lower, double upper,
                                std::uint64_t seed) {
  if (dim < 2 || dim > kMaxDim || divisions < 1) throw ConfigError("bad random template shape");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> eig(lower, upper);
  std::normal_distribution<double> gauss;
  TemplateDef t;
  t.kind = TemplateDef::Kind::table;
  t.dim = dim;
  t.divisions = divisions;
  std::size_t blocks = 1;
  for (int a = 0; a < dim; ++a) blocks *= static_cast<std::size_t>(divisions);
  for (std::size_t b = 0; b < blocks; ++b) {
    Eigen::MatrixXd g(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) g(i, j) = gauss(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::VectorXd lam(dim);
    for (int i = 0; i < dim; ++i) lam(i) = eig(rng);
    t.pieces.push_back(from_dense(q * lam.asDiagonal() * q.transpose()));
  }
  return t;
}

Grid unit_cell_grid(int dim, int resolution) {
  GridSpec s;
  s.dim = dim;
  for (int a = 0; a < dim; ++a) {
    s.extent[a] = 1.0;
    s.cells[a] = resolution;
    s.periodic[a] = true;
  }
  return Grid(s);
}

MatrixField sample_template(const TemplateDef& def, const Grid& g) {
  if (def.dim != g.dim()) throw ConfigError("template dimension does not match grid");
  MatrixField m(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) m.set(c, def.at(g.cell_center(c)));
  return m;
}

SymMat arithmetic_mean(const MatrixField& a) {
  const int d = a.grid().dim();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t c = 0; c < a.grid().num_cells(); ++c) s += dense(a.at(c));
  return from_dense(s / static_cast<double>(a.grid().num_cells()));
}

SymMat harmonic_mean(const MatrixField& a) {
  const int d = a.grid().dim();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t c = 0; c < a.grid().num_cells(); ++c) s += dense(a.at(c)).inverse();
  return from_dense((s / static_cast<double>(a.grid().num_cells())).inverse());
}

ScalarField solve_corrector(const MatrixField& a_per, int i, const CellOptions& opts,
                            CgResult* report) {
  const Grid& g = a_per.grid();
  VectorField rhs_flux = VectorField::centered(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    Vec e{};
    e[i] = 1.0;
    rhs_flux.set(c, 0, a_per.at(c).apply(e));
  }
  const std::vector<double> b = flux_load(rhs_flux);
  Q1Operator op(a_per);
  auto pre = make_preconditioner(opts.preconditioner, op);
  ScalarField phi = ScalarField::nodal(g);
  CgOptions cg = opts.cg;
  cg.zero_mean = true;
  const CgResult r = pcg(op, *pre, b, phi.values, cg, default_max_iterations(g));
  if (report) *report = r;
  if (!r.converged)
    throw SolverError("corrector solve in direction " + std::to_string(i) + " did not converge",
                      r.iterations, r.rel_residual);
  return phi;
}

SymMat homogenized_matrix(const MatrixField& a_per, std::span<const ScalarField> phi,
                          double* asymmetry) {
  const Grid& g = a_per.grid();
  const int d = g.dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const VectorField grad = gradient(phi[i]);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      Vec v = grad.at(c);
      v[i] += 1.0;
      const Vec f = a_per.at(c).apply(v);
      for (int j = 0; j < d; ++j) m(j, i) += f[j];
    }
  }
  m /= static_cast<double>(g.num_cells());
  if (asymmetry) *asymmetry = (m - m.transpose()).cwiseAbs().maxCoeff();
  return from_dense(m);
}

VectorField flux(const MatrixField& a_per, const ScalarField& phi_i, const SymMat& abar, int i) {
  const Grid& g = a_per.grid();
  const int d = g.dim();
  VectorField q = gradient(phi_i);
  Vec e{};
  e[i] = 1.0;
  const Vec ae = abar.apply(e);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    Vec v = q.at(c);
    v[i] += 1.0;
    Vec f = a_per.at(c).apply(v);
    for (int j = 0; j < d; ++j) f[j] -= ae[j];
    q.set(c, 0, f);
  }
  return q;
}

int pair_index(int dim, int j, int k) noexcept {
  if (j > k) std::swap(j, k);
  return dim == 2 ? 0 : j + k - 1;
}

double pair_sign(int j, int k) noexcept { return j < k ? 1.0 : -1.0; }

std::vector<ScalarField> solve_flux_corrector(const VectorField& q_i, const CellOptions& opts,
                                              CgResult* report) {
  const Grid& g = q_i.grid;
  const int d = g.dim();
  if (q_i.points_per_cell != 1) throw ConfigError("flux corrector expects a cell-centered flux");
  // Remove the mean of q for solvability on the torus.
  Vec mean{};
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec v = q_i.at(c);
    for (int a = 0; a < d; ++a) mean[a] += v[a];
  }
  for (int a = 0; a < d; ++a) mean[a] /= static_cast<double>(g.num_cells());

  const MatrixField lap(g, SymMat::identity(d));
  Q1Operator op(lap);
  auto pre = make_preconditioner(opts.preconditioner, op);
  CgOptions cg = opts.cg;
  cg.zero_mean = true;

  std::vector<ScalarField> sigma(static_cast<std::size_t>(d * (d - 1) / 2), ScalarField::nodal(g));
  CgResult worst;
  worst.converged = true;
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      // d_j q^k - d_k q^j = div G with G = q^k e_j - q^j e_k.
      VectorField gflux = VectorField::centered(g);
      for (std::size_t c = 0; c < g.num_cells(); ++c) {
        const Vec v = q_i.at(c);
        Vec gv{};
        gv[j] = v[k] - mean[k];
        gv[k] = -(v[j] - mean[j]);
        gflux.set(c, 0, gv);
      }
      const std::vector<double> b = flux_load(gflux);
      ScalarField& s = sigma[pair_index(d, j, k)];
      const CgResult r = pcg(op, *pre, b, s.values, cg, default_max_iterations(g));
      worst.iterations = std::max(worst.iterations, r.iterations);
      worst.rel_residual = std::max(worst.rel_residual, r.rel_residual);
      worst.converged = worst.converged && r.converged;
      worst.finite = worst.finite && r.finite;
      if (!r.converged)
        throw SolverError("flux corrector solve did not converge", r.iterations, r.rel_residual);
    }
  }
  if (report) *report = worst;
  return sigma;
}

VectorField divergence(std::span<const ScalarField> sigma_i) {
  const Grid& g = sigma_i.front().grid;
  const int d = g.dim();
  VectorField out = VectorField::centered(g);
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      const VectorField grad = gradient(sigma_i[pair_index(d, j, k)]);
      for (std::size_t c = 0; c < g.num_cells(); ++c) {
        const Vec gr = grad.at(c);
        Vec v = out.at(c);
        v[j] += gr[k];  // d_k sigma^{jk}
        v[k] -= gr[j];  // d_j sigma^{kj} = -d_j sigma^{jk}
        out.set(c, 0, v);
      }
    }
  }
  return out;
}

double CorrectorSet::sigma_entry(int i, int j, int k, std::size_t node) const noexcept {
  if (j == k) return 0.0;
  return pair_sign(j, k) * sigma[i][pair_index(dim(), j, k)][node];
}

CellDiagnostics corrector_bounds(const CorrectorSet& c) {
  CellDiagnostics dg = c.diagnostics;
  const int d = c.dim();
  const Grid& g = c.a_per.grid();
  const double vol = g.cell_volume();
  for (int i = 0; i < d; ++i) {
    const auto& phi = c.phi[i].values;
    double sup = 0.0, mean = 0.0;
    for (double v : phi) {
      sup = std::max(sup, std::abs(v));
      mean += v;
    }
    dg.phi_sup[i] = sup;
    dg.phi_mean[i] = mean / static_cast<double>(phi.size());

    const VectorField grad = gradient(c.phi[i]);
    double energy = 0.0, gsup = 0.0;
    for (std::size_t cc = 0; cc < g.num_cells(); ++cc) {
      const Vec v = grad.at(cc);
      double s = 0.0;
      for (int a = 0; a < d; ++a) {
        s += v[a] * v[a];
        gsup = std::max(gsup, std::abs(v[a]));
      }
      energy += s * vol;
    }
    dg.phi_energy[i] = energy;
    dg.grad_phi_sup[i] = gsup;

    double ssup = 0.0, senergy = 0.0;
    for (const auto& s : c.sigma[i]) {
      for (double v : s.values) ssup = std::max(ssup, std::abs(v));
      const VectorField sg = gradient(s);
      for (double v : sg.values) senergy += v * v * vol;
    }
    dg.sigma_sup[i] = ssup;
    dg.sigma_energy[i] = senergy;

    const VectorField& q = c.q[i];
    const VectorField div = divergence(c.sigma[i]);
    double qmean = 0.0, diff = 0.0;
    Vec qm{};
    for (std::size_t cc = 0; cc < g.num_cells(); ++cc)
      for (int a = 0; a < d; ++a) qm[a] += q.at(cc)[a];
    for (int a = 0; a < d; ++a) {
      qm[a] /= static_cast<double>(g.num_cells());
      qmean = std::max(qmean, std::abs(qm[a]));
    }
    std::vector<double> centered(q.values.size());
    for (std::size_t n = 0; n < q.values.size(); ++n) {
      centered[n] = q.values[n] - qm[n % d];
      const double e = div.values[n] - centered[n];
      diff += e * e;
    }
    dg.q_mean[i] = qmean;
    const double qn = l2_norm_cells(g, centered);
    // Relative when q^i is resolvable, absolute when it vanishes to rounding.
    const double abs_res = std::sqrt(diff * vol);
    dg.div_residual[i] = qn > 1e-12 ? abs_res / qn : abs_res;
  }

  const auto [lo, hi] = c.a_per.eigen_range();
  const Vec e = c.abar.eigenvalues();
  dg.ellipticity_slack = std::max({0.0, lo - e[0], e[d - 1] - hi});
  return dg;
}

CorrectorSet solve_cell(const PeriodicTemplate& t, const CellOptions& opts) {
  CorrectorSet c;
  c.label = t.label;
  c.resolution = opts.resolution;
  c.def = t.def;
  c.cache_key = cache_key(t.def, opts.resolution);
  const Grid g = unit_cell_grid(t.def.dim, opts.resolution);
  c.a_per = sample_template(t.def, g);
  const int d = t.def.dim;
  if (t.def.kind == TemplateDef::Kind::constant) {
    // Affine profiles are already A-harmonic: exact zero correctors.
    c.abar = t.def.matrix;
    c.phi.assign(static_cast<std::size_t>(d), ScalarField::nodal(g));
    for (int i = 0; i < d; ++i) {
      c.q.push_back(flux(c.a_per, c.phi[i], c.abar, i));
      c.sigma.emplace_back(static_cast<std::size_t>(d * (d - 1) / 2), ScalarField::nodal(g));
    }
    c.diagnostics = corrector_bounds(c);
    return c;
  }
  for (int i = 0; i < d; ++i) {
    CgResult r;
    c.phi.push_back(solve_corrector(c.a_per, i, opts, &r));
    c.diagnostics.phi_iterations[i] = r.iterations;
    c.diagnostics.phi_residual[i] = r.rel_residual;
  }
  c.abar = homogenized_matrix(c.a_per, c.phi, &c.diagnostics.abar_asymmetry);
  for (int i = 0; i < d; ++i) {
    c.q.push_back(flux(c.a_per, c.phi[i], c.abar, i));
    CgResult r;
    c.sigma.push_back(solve_flux_corrector(c.q[i], opts, &r));
    c.diagnostics.sigma_iterations = std::max(c.diagnostics.sigma_iterations, r.iterations);
    c.diagnostics.sigma_residual = std::max(c.diagnostics.sigma_residual, r.rel_residual);
  }
  c.diagnostics = corrector_bounds(c);
  return c;
}

std::string cache_key(const TemplateDef& def, int resolution) {
  const std::string text = def.canonical() + ";res=" + std::to_string(resolution);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

nlohmann::json matrix_json(const SymMat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.dim(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.dim(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

template <typename T>
nlohmann::json head(const std::array<T, kMaxDim>& a, int d) {
  return nlohmann::json(std::vector<T>(a.begin(), a.begin() + d));
}

}  // namespace

void save_corrector_set(const CorrectorSet& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int d = c.dim();
  const auto& dg = c.diagnostics;
  nlohmann::json j;
  j["label"] = c.label;
  j["resolution"] = c.resolution;
  j["cache_key"] = c.cache_key;
  j["template"] = c.def.canonical();
  j["Abar"] = matrix_json(c.abar);
  j["diagnostics"] = {
      {"phi_sup", head(dg.phi_sup, d)},
      {"phi_energy", head(dg.phi_energy, d)},
      {"grad_phi_sup", head(dg.grad_phi_sup, d)},
      {"phi_mean", head(dg.phi_mean, d)},
      {"sigma_sup", head(dg.sigma_sup, d)},
      {"sigma_energy", head(dg.sigma_energy, d)},
      {"q_mean", head(dg.q_mean, d)},
      {"div_residual", head(dg.div_residual, d)},
      {"phi_iterations", head(dg.phi_iterations, d)},
      {"phi_residual", head(dg.phi_residual, d)},
      {"sigma_iterations", dg.sigma_iterations},
      {"sigma_residual", dg.sigma_residual},
      {"abar_asymmetry", dg.abar_asymmetry},
      {"ellipticity_slack", dg.ellipticity_slack},
  };
  std::ofstream(dir / "Abar.json") << j.dump(2) << '\n';
  for (int i = 0; i < d; ++i) {
    write_binary(dir / ("phi_" + std::to_string(i) + ".bin"), to_dump(c.phi[i]));
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b)
        write_binary(dir / ("sigma_" + std::to_string(i) + "_" + std::to_string(a) +
                            std::to_string(b) + ".bin"),
                     to_dump(c.sigma[i][pair_index(d, a, b)]));
  }
}

CorrectorSet load_corrector_set(const std::filesystem::path& dir, const TemplateDef& def) {
  std::ifstream is(dir / "Abar.json");
  if (!is) throw ConfigError("no corrector cache at " + dir.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(dir.string() + "/Abar.json: " + e.what());
  }
  CorrectorSet c;
  c.def = def;
  c.label = j.at("label").get<std::string>();
  c.resolution = j.at("resolution").get<int>();
  c.cache_key = j.at("cache_key").get<std::string>();
  if (c.cache_key != cache_key(def, c.resolution))
    throw ConfigError("corrector cache at " + dir.string() + " belongs to a different template");
  const int d = def.dim;
  c.abar = SymMat(d);
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) c.abar.set(a, b, j.at("Abar").at(a).at(b).get<double>());
  const Grid g = unit_cell_grid(d, c.resolution);
  c.a_per = sample_template(def, g);
  for (int i = 0; i < d; ++i) {
    c.phi.push_back(scalar_from_dump(read_binary(dir / ("phi_" + std::to_string(i) + ".bin"))));
    std::vector<ScalarField> s(static_cast<std::size_t>(d * (d - 1) / 2));
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b)
        s[pair_index(d, a, b)] = scalar_from_dump(read_binary(
            dir / ("sigma_" + std::to_string(i) + "_" + std::to_string(a) + std::to_string(b) + ".bin")));
    c.sigma.push_back(std::move(s));
    c.q.push_back(flux(c.a_per, c.phi[i], c.abar, i));
  }
  const auto& dj = j.at("diagnostics");
  for (int i = 0; i < d; ++i) {
    c.diagnostics.phi_iterations[i] = dj.at("phi_iterations").at(i).get<int>();
    c.diagnostics.phi_residual[i] = dj.at("phi_residual").at(i).get<double>();
  }
  c.diagnostics.sigma_iterations = dj.at("sigma_iterations").get<int>();
  c.diagnostics.sigma_residual = dj.at("sigma_residual").get<double>();
  c.diagnostics.abar_asymmetry = dj.at("abar_asymmetry").get<double>();
  c.diagnostics = corrector_bounds(c);
  return c;
}

}  // namespace homlab
