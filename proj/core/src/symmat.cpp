#include "homlab/symmat.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "homlab/errors.hpp"

namespace homlab {

SymMat SymMat::identity(int dim, double scale) {
  SymMat m(dim);
  for (int i = 0; i < dim; ++i) m.set(i, i, scale);
  return m;
}

SymMat SymMat::diagonal(std::span<const double> diag) {
  SymMat m(static_cast<int>(diag.size()));
  for (int i = 0; i < m.dim(); ++i) m.set(i, i, diag[i]);
  return m;
}

SymMat SymMat::from_full(int dim, std::span<const double> rowmajor) {
  if (rowmajor.size() != static_cast<std::size_t>(dim * dim))
    throw ConfigError("matrix has " + std::to_string(rowmajor.size()) + " entries, expected " +
                      std::to_string(dim * dim));
  SymMat m(dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      const double a = rowmajor[i * dim + j];
      const double b = rowmajor[j * dim + i];
      if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}))
        throw ConfigError("matrix is not symmetric");
      m.set(i, j, a);
    }
  }
  return m;
}

SymMat SymMat::from_packed(int dim, std::span<const double> packed) {
  SymMat m(dim);
  std::copy(packed.begin(), packed.begin() + packed_size(dim), m.p_.begin());
  return m;
}

Vec SymMat::apply(const Vec& v) const noexcept {
  Vec r{};
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) r[i] += (*this)(i, j) * v[j];
  return r;
}

double SymMat::quad(const Vec& v) const noexcept {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) s += v[i] * (*this)(i, j) * v[j];
  return s;
}

Vec SymMat::eigenvalues() const {
  Vec ev{};
  if (dim_ == 1) {
    ev[0] = p_[0];
  } else if (dim_ == 2) {
    const double a = p_[0], b = p_[1], d = p_[2];
    const double mean = 0.5 * (a + d);
    const double rad = std::hypot(0.5 * (a - d), b);
    ev[0] = mean - rad;
    ev[1] = mean + rad;
  } else {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = (*this)(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m, Eigen::EigenvaluesOnly);
    for (int i = 0; i < 3; ++i) ev[i] = es.eigenvalues()[i];
  }
  return ev;
}

double SymMat::operator_norm() const {
  const Vec ev = eigenvalues();
  return std::max(std::abs(ev[0]), std::abs(ev[dim_ - 1]));
}

SymMat SymMat::operator-(const SymMat& o) const noexcept {
  SymMat r(dim_);
  for (int s = 0; s < packed_size(dim_); ++s) r.p_[s] = p_[s] - o.p_[s];
  return r;
}

SymMat SymMat::operator+(const SymMat& o) const noexcept {
  SymMat r(dim_);
  for (int s = 0; s < packed_size(dim_); ++s) r.p_[s] = p_[s] + o.p_[s];
  return r;
}

SymMat SymMat::operator*(double s) const noexcept {
  SymMat r(dim_);
  for (int k = 0; k < packed_size(dim_); ++k) r.p_[k] = p_[k] * s;
  return r;
}

bool SymMat::operator==(const SymMat& o) const noexcept {
  if (dim_ != o.dim_) return false;
  for (int s = 0; s < packed_size(dim_); ++s)
    if (p_[s] != o.p_[s]) return false;
  return true;
}

double SymMat::max_abs_entry() const noexcept {
  double m = 0.0;
  for (int s = 0; s < packed_size(dim_); ++s) m = std::max(m, std::abs(p_[s]));
  return m;
}

bool is_elliptic(const SymMat& m, double lower, double upper, double slack) {
  const Vec ev = m.eigenvalues();
  const double tol = slack * std::max(1.0, std::abs(upper));
  return ev[0] >= lower - tol && ev[m.dim() - 1] <= upper + tol;
}

}  // namespace homlab
