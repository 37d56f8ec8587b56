#include "homlab/whitney.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "homlab/errors.hpp"

namespace homlab {

double WhitneyBox::side() const noexcept { return std::ldexp(1.0, k); }

Vec WhitneyBox::center(int dim) const noexcept {
  Vec c{};
  const double s = side();
  for (int a = 0; a + 1 < dim; ++a) c[a] = s * j[a];
  c[dim - 1] = 1.5 * s;
  return c;
}

Box WhitneyBox::box(int dim) const noexcept { return shrunk(dim, 0.0); }

Box WhitneyBox::shrunk(int dim, double shrink) const noexcept {
  const Vec c = center(dim);
  const double half = 0.5 * (1.0 - shrink) * side();
  Box b{dim, {}, {}};
  for (int a = 0; a < dim; ++a) {
    b.lo[a] = c[a] - half;
    b.hi[a] = c[a] + half;
  }
  return b;
}

int WhitneyLayout::per_axis(int k) const noexcept {
  return static_cast<int>(std::lround(std::ldexp(x_extent, -k)));
}

std::size_t WhitneyLayout::index(int k, const BoxIndex& j) const noexcept {
  const int n_h = dim - 1;
  std::size_t offset = 0;
  for (int g = -1; g > k; --g) {
    std::size_t count = 1;
    for (int a = 0; a < n_h; ++a) count *= static_cast<std::size_t>(per_axis(g));
    offset += count;
  }
  const auto n = static_cast<std::size_t>(per_axis(k));
  std::size_t local = 0, stride = 1;
  for (int a = 0; a < n_h; ++a) {
    local += static_cast<std::size_t>(j[a]) * stride;
    stride *= n;
  }
  return offset + local;
}

const WhitneyBox* WhitneyLayout::locate(const Vec& p) const noexcept {
  const double t = p[dim - 1];
  if (!(t >= std::ldexp(1.0, -K)) || t >= 1.0) return nullptr;
  const int k = generation_of(t);
  return &boxes[index(k, box_index_of(p, dim, k, x_extent))];
}

std::vector<std::size_t> WhitneyLayout::touching(std::size_t i) const {
  const WhitneyBox& b = boxes[i];
  const Vec c = b.center(dim);
  const double s = b.side();
  constexpr double slack = 1e-12;
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < boxes.size(); ++m) {
    if (m == i) continue;
    const WhitneyBox& o = boxes[m];
    const double so = o.side();
    const Vec co = o.center(dim);
    if (std::max(s, so) > std::min(2 * s, 2 * so) + slack) continue;
    bool meets = true;
    for (int a = 0; a + 1 < dim && meets; ++a)
      meets = std::abs(wrapped_offset(co[a], c[a], x_extent)) <= 0.5 * (s + so) + slack;
    if (meets) out.push_back(m);
  }
  return out;
}

int generation_of(double t) noexcept { return std::ilogb(t); }

double wrapped_offset(double x, double c, double period) noexcept {
  double d = std::fmod(x - c, period);
  if (d < -0.5 * period) d += period;
  if (d >= 0.5 * period) d -= period;
  return d;
}

BoxIndex box_index_of(const Vec& p, int dim, int k, double x_extent) noexcept {
  const double s = std::ldexp(1.0, k);
  const long n = std::lround(x_extent / s);
  BoxIndex j{};
  for (int a = 0; a + 1 < dim; ++a) {
    long v = static_cast<long>(std::floor(p[a] / s + 0.5)) % n;
    if (v < 0) v += n;
    j[a] = static_cast<int>(v);
  }
  return j;
}

WhitneyLayout whitney_decompose(int dim, double x_extent, int K) {
  if (dim < 2 || dim > kMaxDim) throw ConfigError("Whitney layout needs dim 2 or 3");
  if (K < 1) throw ConfigError("K must be at least 1");
  const double twice = 2.0 * x_extent;
  if (!(x_extent > 0.0) || twice != std::round(twice))
    throw ConfigError("x_extent must be a positive multiple of 1/2");
  WhitneyLayout l;
  l.dim = dim;
  l.x_extent = x_extent;
  l.K = K;
  const int n_h = dim - 1;
  for (int k = -1; k >= -K; --k) {
    const int n = l.per_axis(k);
    BoxIndex j{};
    std::size_t count = 1;
    for (int a = 0; a < n_h; ++a) count *= static_cast<std::size_t>(n);
    for (std::size_t m = 0; m < count; ++m) {
      std::size_t r = m;
      for (int a = 0; a < n_h; ++a) {
        j[a] = static_cast<int>(r % n);
        r /= n;
      }
      l.boxes.push_back(WhitneyBox{k, j, 1.0, 0.5});
    }
  }
  return l;
}

std::string to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::theorem: return "theorem";
    case ScheduleMode::laminate: return "laminate";
    case ScheduleMode::constant: return "constant";
    case ScheduleMode::custom: return "custom";
  }
  return "theorem";
}

ScheduleMode parse_schedule_mode(const std::string& name) {
  for (auto m : {ScheduleMode::theorem, ScheduleMode::laminate, ScheduleMode::constant,
                 ScheduleMode::custom})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown schedule mode '" + name + "'");
}

double EpsilonSchedule::exponent() const {
  switch (mode) {
    case ScheduleMode::theorem:
      if (!(p > 1.0)) throw ConfigError("Meyers exponent p must exceed 1");
      if (std::isinf(p)) return 1.5;
      return (3.0 * p - 1.0) / (2.0 * (p - 1.0));
    case ScheduleMode::laminate: return 1.5;
    case ScheduleMode::constant: return 1.0;
    case ScheduleMode::custom: return custom_exponent;
  }
  return 1.0;
}

double epsilon_for(int k, const EpsilonSchedule& s) {
  if (k >= 0) throw ConfigError("generation must be negative");
  if (!(s.c > 0.0)) throw ConfigError("schedule prefactor c must be positive");
  return std::min(1.0, s.c * std::exp2(s.exponent() * k));
}

double round_epsilon(double eps) {
  if (!(eps > 0.0) || eps > 1.0) throw ConfigError("eps must lie in (0, 1]");
  // The slack keeps exact reciprocals such as 1/16 from rounding up.
  return 1.0 / std::ceil(1.0 / eps - 1e-9);
}

double eta_for(double eps, double p) {
  if (!(p > 1.0)) throw ConfigError("Meyers exponent p must exceed 1");
  const double beta = std::isinf(p) ? 2.0 / 3.0 : 2.0 * p / (3.0 * p - 1.0);
  return std::min(0.5, std::pow(eps, beta));
}

const std::string& Assignment::label_for(int k, const BoxIndex& j, int horizontal) const noexcept {
  if (rule == Rule::single) return first;
  long s = k;
  for (int a = 0; a < horizontal; ++a) s += j[a];
  return (s % 2 == 0) ? first : second;
}

void CoefficientSpec::validate() const {
  if (!(lambda > 0.0) || lambda > upper) throw ConfigError("need 0 < lambda <= upper");
  if (K < 1) throw ConfigError("K must be at least 1");
  if (A_inf.dim() != dim) throw ConfigError("A_inf has the wrong dimension");
  if (!is_elliptic(A_inf, lambda, upper, 1e-12))
    throw ConfigError("A_inf violates lambda Id <= A_inf <= upper Id");
  std::vector<std::string> labels{assignment.first};
  if (assignment.rule == Assignment::Rule::alternating) labels.push_back(assignment.second);
  for (const auto& l : labels)
    if (!templates.contains(l)) throw ConfigError("assignment references unknown template '" + l + "'");
  for (const auto& [label, t] : templates) {
    if (t.dim != dim) throw ConfigError("template '" + label + "' has the wrong dimension");
    const auto [lo, hi] = t.eigen_range();
    if (lo < lambda * (1 - 1e-12) || hi > upper * (1 + 1e-12))
      throw ConfigError("template '" + label + "' violates lambda Id <= A <= upper Id");
  }
  (void)schedule.exponent();
}

WhitneyLayout make_layout(const CoefficientSpec& spec) {
  WhitneyLayout l = whitney_decompose(spec.dim, spec.x_extent, spec.K);
  for (auto& b : l.boxes) {
    b.eps = round_epsilon(epsilon_for(b.k, spec.schedule));
    b.eta = eta_for(b.eps, spec.schedule.p);
  }
  return l;
}

double required_spacing(const CoefficientSpec& spec, const WhitneyLayout& layout) {
  double h = std::numeric_limits<double>::infinity();
  for (const auto& b : layout.boxes) {
    const auto& t = spec.templates.at(spec.assignment.label_for(b.k, b.j, spec.dim - 1));
    if (t.kind == TemplateDef::Kind::constant) continue;
    h = std::min(h, b.side() * b.eps / spec.min_cells_per_period);
  }
  return h;
}

namespace {

void check_strip_grid(const CoefficientSpec& spec, const Grid& g) {
  const int d = spec.dim;
  if (g.dim() != d) throw ConfigError("grid dimension does not match coefficient spec");
  if (g.origin(d - 1) != 0.0 || g.periodic(d - 1))
    throw ConfigError("strip grid must start at t = 0 with a non-periodic t axis");
}

}  // namespace

MatrixField assemble_A(const CoefficientSpec& spec, const WhitneyLayout& layout, const Grid& g,
                       const std::map<std::string, SymMat>& abar) {
  check_strip_grid(spec, g);
  const int d = spec.dim;
  const double h_req = required_spacing(spec, layout);
  for (int a = 0; a < d; ++a) {
    if (g.h(a) > h_req * (1 + 1e-9)) {
      const double need = std::ceil(1.0 / h_req - 1e-9);
      throw ConfigError("coefficient under-resolved along axis " + std::to_string(a) +
                        ": need h <= " + std::to_string(h_req) + " (" +
                        std::to_string(static_cast<long>(need)) + " cells per unit length)");
    }
  }
  const double t_min = std::ldexp(1.0, -spec.K);
  MatrixField out(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec p = g.cell_center(c);
    const double t = p[d - 1];
    if (t >= 1.0) {
      out.set(c, spec.A_inf);
    } else if (t >= t_min) {
      const WhitneyBox& b = *layout.locate(p);
      const double period = b.side() * b.eps;
      Vec y{};
      for (int a = 0; a < d; ++a) y[a] = p[a] / period;
      out.set(c, spec.templates.at(spec.assignment.label_for(b.k, b.j, d - 1)).at(y));
    } else {
      const int k = generation_of(t);
      const auto& label = spec.assignment.label_for(k, box_index_of(p, d, k, spec.x_extent), d - 1);
      const auto it = abar.find(label);
      if (it == abar.end()) throw ConfigError("no homogenized matrix for template '" + label + "'");
      out.set(c, it->second);
    }
  }
  return out;
}

MatrixField assemble_Abar(const CoefficientSpec& spec, const Grid& g,
                          const std::map<std::string, SymMat>& abar) {
  check_strip_grid(spec, g);
  const int d = spec.dim;
  MatrixField out(g);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Vec p = g.cell_center(c);
    const double t = p[d - 1];
    if (t >= 1.0) {
      out.set(c, spec.A_inf);
      continue;
    }
    const int k = generation_of(t);
    const auto& label = spec.assignment.label_for(k, box_index_of(p, d, k, spec.x_extent), d - 1);
    const auto it = abar.find(label);
    if (it == abar.end()) throw ConfigError("no homogenized matrix for template '" + label + "'");
    out.set(c, it->second);
  }
  return out;
}

double smoothstep(double s) noexcept {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (s * (6.0 * s - 15.0) + 10.0);
}

double smoothstep_derivative(double s) noexcept {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  const double u = s * (1.0 - s);
  return 30.0 * u * u;
}

namespace {

// Per-axis factor and its derivative with respect to the signed offset r.
std::pair<double, double> axis_cutoff(double r, double side, double eta) noexcept {
  const double inner = 0.5 * (1.0 - eta) * side;
  const double width = 0.25 * eta * side;
  const double s = (std::abs(r) - inner) / width;
  const double v = 1.0 - smoothstep(s);
  const double dv = -smoothstep_derivative(s) / width * (r < 0 ? -1.0 : 1.0);
  return {v, dv};
}

}  // namespace

double cutoff_value(const WhitneyBox& b, int dim, double x_extent, const Vec& p) noexcept {
  const Vec c = b.center(dim);
  double v = 1.0;
  for (int a = 0; a < dim && v != 0.0; ++a) {
    const double r = a + 1 < dim ? wrapped_offset(p[a], c[a], x_extent) : p[a] - c[a];
    v *= axis_cutoff(r, b.side(), b.eta).first;
  }
  return v;
}

Vec cutoff_gradient(const WhitneyBox& b, int dim, double x_extent, const Vec& p) noexcept {
  const Vec c = b.center(dim);
  std::array<std::pair<double, double>, kMaxDim> f{};
  for (int a = 0; a < dim; ++a) {
    const double r = a + 1 < dim ? wrapped_offset(p[a], c[a], x_extent) : p[a] - c[a];
    f[a] = axis_cutoff(r, b.side(), b.eta);
  }
  Vec g{};
  for (int a = 0; a < dim; ++a) {
    double v = f[a].second;
    for (int o = 0; o < dim; ++o)
      if (o != a) v *= f[o].first;
    g[a] = v;
  }
  return g;
}

double cutoff_gradient_bound(const WhitneyBox& b) noexcept {
  return 1.875 / (0.25 * b.eta * b.side());
}

ScalarField cutoff_chi(const WhitneyBox& b, const WhitneyLayout& layout, const Grid& g) {
  ScalarField chi = ScalarField::nodal(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n)
    chi[n] = cutoff_value(b, layout.dim, layout.x_extent, g.node_point(n));
  return chi;
}

}  // namespace homlab
