#include "homlab/oracle1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "homlab/errors.hpp"

namespace homlab::oracle1d {

void Profile1D::validate() const {
  if (a.empty()) throw ConfigError("1-D profile needs at least one coefficient value");
  for (double v : a)
    if (!(v > 0.0)) throw ConfigError("1-D coefficient must be positive");
  if (f.size() < 2 || f.front().first != 0.0 || f.back().first != 1.0)
    throw ConfigError("forcing nodes must span [0, 1]");
  for (std::size_t i = 1; i < f.size(); ++i)
    if (!(f[i].first > f[i - 1].first)) throw ConfigError("forcing nodes must be increasing");
}

double abar(const Profile1D& p) {
  double s = 0.0;
  for (double v : p.a) s += 1.0 / v;
  return static_cast<double>(p.a.size()) / s;
}

double arithmetic_mean(const Profile1D& p) {
  double s = 0.0;
  for (double v : p.a) s += v;
  return s / static_cast<double>(p.a.size());
}

ExactSolution::ExactSolution(const Profile1D& p, double eps) : f_(p.f) {
  p.validate();
  const auto m = static_cast<long>(p.a.size());
  std::vector<double> cuts;
  for (const auto& [x, v] : f_) cuts.push_back(x);
  long periods = 0;
  if (eps > 0.0) {
    const double n = 1.0 / eps;
    periods = std::lround(n);
    if (std::abs(n - static_cast<double>(periods)) > 1e-9 * n)
      throw ConfigError("eps must be the reciprocal of an integer");
    for (long q = 0; q < periods * m; ++q)
      cuts.push_back(static_cast<double>(q) / static_cast<double>(periods * m));
  }
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  x_ = cuts;

  const double ab = abar(p);
  for (std::size_t s = 0; s + 1 < x_.size(); ++s) {
    if (eps > 0.0) {
      // Piece of a containing the segment midpoint, on the fine lattice.
      const double mid = 0.5 * (x_[s] + x_[s + 1]);
      const long q = static_cast<long>(std::floor(mid * periods * m));
      inv_a_.push_back(1.0 / p.a[static_cast<std::size_t>(q % m)]);
    } else {
      inv_a_.push_back(1.0 / ab);
    }
  }
  i1_.assign(x_.size(), 0.0);
  i2_.assign(x_.size(), 0.0);
  for (std::size_t s = 0; s + 1 < x_.size(); ++s) {
    const auto [d1, d2] = partial(s, x_[s + 1]);
    i1_[s + 1] = i1_[s] + d1;
    i2_[s + 1] = i2_[s] + d2;
  }
  ratio_ = i2_.back() / i1_.back();
}

double ExactSolution::f_at(double x) const {
  auto it = std::upper_bound(f_.begin(), f_.end(), x,
                             [](double v, const auto& node) { return v < node.first; });
  if (it == f_.begin()) return f_.front().second;
  if (it == f_.end()) return f_.back().second;
  const auto& [x1, v1] = *it;
  const auto& [x0, v0] = *(it - 1);
  return v0 + (v1 - v0) * (x - x0) / (x1 - x0);
}

std::pair<double, double> ExactSolution::partial(std::size_t s, double x) const {
  const double x0 = x_[s];
  const double len = x - x0;
  // f is linear inside a segment: trapezoid is exact.
  return {inv_a_[s] * len, inv_a_[s] * 0.5 * (f_at(x0) + f_at(x)) * len};
}

double ExactSolution::operator()(double x) const {
  x = std::clamp(x, 0.0, 1.0);
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t s = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  if (s + 1 >= x_.size()) s = x_.size() - 2;
  const auto [d1, d2] = partial(s, x);
  return (i2_[s] + d2) - (i1_[s] + d1) * ratio_;
}

double exact_u_eps(const Profile1D& p, double eps, double x) { return ExactSolution(p, eps)(x); }

double exact_ubar(const Profile1D& p, double x) { return ExactSolution(p, 0.0)(x); }

double l2_difference(const ExactSolution& a, const ExactSolution& b) {
  std::vector<double> cuts = a.breakpoints();
  cuts.insert(cuts.end(), b.breakpoints().begin(), b.breakpoints().end());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  // Three-point Gauss-Legendre is exact for the quartic (u_a - u_b)^2.
  const double r = std::sqrt(0.6);
  const double nodes[3] = {-r, 0.0, r};
  const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double c = 0.5 * (cuts[i] + cuts[i + 1]);
    const double h = 0.5 * (cuts[i + 1] - cuts[i]);
    for (int q = 0; q < 3; ++q) {
      const double x = c + h * nodes[q];
      const double d = a(x) - b(x);
      s += weights[q] * h * d * d;
    }
  }
  return std::sqrt(s);
}

std::vector<ErrorRow> l2_error_curve(const Profile1D& p, const std::vector<double>& eps_list) {
  const ExactSolution ubar(p, 0.0);
  std::vector<ErrorRow> rows;
  for (double eps : eps_list) {
    if (!(eps > 0.0) || eps > 1.0) throw ConfigError("eps must lie in (0, 1]");
    ErrorRow r;
    r.eps = eps;
    r.error = l2_difference(ExactSolution(p, eps), ubar);
    if (rows.empty()) {
      r.slope = std::numeric_limits<double>::quiet_NaN();
    } else {
      const auto& prev = rows.back();
      r.slope = std::log(r.error / prev.error) / std::log(r.eps / prev.eps);
    }
    rows.push_back(r);
  }
  return rows;
}

double fitted_slope(const std::vector<ErrorRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double x = std::log(r.eps), y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace homlab::oracle1d
