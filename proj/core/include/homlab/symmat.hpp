#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>

namespace homlab {

inline constexpr int kMaxDim = 3;

using Vec = std::array<double, kMaxDim>;

/// Number of independent entries of a symmetric dim x dim matrix.
constexpr int packed_size(int dim) { return dim * (dim + 1) / 2; }

/// Symmetric matrix of order 2 or 3. Symmetry holds by construction: only the
/// upper triangle is stored and both (i,j) and (j,i) read the same slot.
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(int dim) : dim_(dim) {}

  static SymMat identity(int dim, double scale = 1.0);
  static SymMat diagonal(std::span<const double> diag);
  /// Build from a full row-major dim x dim array; throws ConfigError if the
  /// input is not symmetric to 1e-12 relative.
  static SymMat from_full(int dim, std::span<const double> rowmajor);
  static SymMat from_packed(int dim, std::span<const double> packed);

  int dim() const noexcept { return dim_; }

  double operator()(int i, int j) const noexcept { return p_[slot(i, j)]; }
  void set(int i, int j, double v) noexcept { p_[slot(i, j)] = v; }

  /// Upper-triangle storage in row order: (0,0),(0,1),..,(0,d-1),(1,1),...
  std::span<const double> packed() const noexcept {
    return {p_.data(), static_cast<std::size_t>(packed_size(dim_))};
  }

  Vec apply(const Vec& v) const noexcept;
  double quad(const Vec& v) const noexcept;

  /// Eigenvalues in ascending order (entries beyond dim() are zero).
  Vec eigenvalues() const;
  double min_eigenvalue() const { return eigenvalues()[0]; }
  double max_eigenvalue() const { return eigenvalues()[dim_ - 1]; }
  /// Spectral norm, i.e. max |eigenvalue|.
  double operator_norm() const;

  SymMat operator-(const SymMat& o) const noexcept;
  SymMat operator+(const SymMat& o) const noexcept;
  SymMat operator*(double s) const noexcept;
  bool operator==(const SymMat& o) const noexcept;

  double max_abs_entry() const noexcept;

 private:
  int slot(int i, int j) const noexcept {
    if (i > j) std::swap(i, j);
    return i * dim_ - i * (i - 1) / 2 + (j - i);
  }

  int dim_ = 0;
  std::array<double, 6> p_{};
};

/// lower <= eig(M) <= upper, with a relative slack for rounding.
bool is_elliptic(const SymMat& m, double lower, double upper, double slack = 1e-12);

}  // namespace homlab
