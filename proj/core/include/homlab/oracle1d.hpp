#pragma once

#include <utility>
#include <vector>

namespace homlab::oracle1d {

/// 1-periodic coefficient with `a.size()` equal pieces on [0,1), and a
/// piecewise linear forcing f given by sorted nodes spanning [0,1].
struct Profile1D {
  std::vector<double> a;
  std::vector<std::pair<double, double>> f;

  /// Throws ConfigError unless a > 0, f has >= 2 nodes, starts at 0, ends at 1
  /// and is sorted.
  void validate() const;
};

/// Harmonic mean (the homogenized coefficient) and arithmetic mean of a.
double abar(const Profile1D& p);
double arithmetic_mean(const Profile1D& p);

/// Closed-form solution of (a(x/eps) u')' = f', u(0) = u(1) = 0, evaluated
/// with exact piecewise integration. Build once, evaluate many times.
class ExactSolution {
 public:
  /// eps = 0 builds the homogenized solution with coefficient abar.
  ExactSolution(const Profile1D& p, double eps);

  double operator()(double x) const;
  /// Breakpoints where u is not smooth.
  const std::vector<double>& breakpoints() const noexcept { return x_; }

 private:
  double f_at(double x) const;
  // Integrals of 1/a and f/a over [x_s, x] inside segment s.
  std::pair<double, double> partial(std::size_t s, double x) const;

  std::vector<std::pair<double, double>> f_;
  std::vector<double> x_;      // segment boundaries
  std::vector<double> inv_a_;  // 1/a per segment
  std::vector<double> i1_, i2_;
  double ratio_ = 0.0;  // I2(1) / I1(1)
};

double exact_u_eps(const Profile1D& p, double eps, double x);
double exact_ubar(const Profile1D& p, double x);

/// ||u_a - u_b||_{L2(0,1)}, exact for the piecewise quadratic difference.
double l2_difference(const ExactSolution& a, const ExactSolution& b);

struct ErrorRow {
  double eps = 0.0;
  double error = 0.0;
  /// log-log slope against the previous row (NaN for the first).
  double slope = 0.0;
};

/// Requires every eps to be the reciprocal of an integer; throws ConfigError
/// otherwise.
std::vector<ErrorRow> l2_error_curve(const Profile1D& p, const std::vector<double>& eps_list);

/// Least-squares slope of log(error) against log(eps).
double fitted_slope(const std::vector<ErrorRow>& rows);

}  // namespace homlab::oracle1d
