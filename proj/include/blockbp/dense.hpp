#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "blockbp/expander.hpp"

namespace blockbp {

/// Row-major dense matrix for desk-scale linear algebra: materialized
/// expanders, Kronecker oracles, kernel bases, covariance factors.
struct dense_matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;  // rows * cols, row-major

  dense_matrix() = default;
  dense_matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != cols) throw std::invalid_argument("dense apply: shape");
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = a.data() + r * cols;
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
      out[r] = s;
    }
    return out;
  }

  std::vector<double> adjoint_apply(std::span<const double> v) const {
    if (v.size() != rows) throw std::invalid_argument("dense adjoint: shape");
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double vr = v[r];
      if (vr == 0.0) continue;
      const double* row = a.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) out[c] += vr * row[c];
    }
    return out;
  }
};

inline dense_matrix materialize(const bipartite_expander& x) {
  dense_matrix m(x.n_rows, x.n_cols);
  for (std::size_t c = 0; c < x.n_cols; ++c)
    for (std::uint32_t r : x.column(c)) m.at(r, c) = 1.0;
  return m;
}

inline dense_matrix kronecker(const dense_matrix& a, const dense_matrix& b) {
  dense_matrix k(a.rows * b.rows, a.cols * b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double aij = a.at(i, j);
      if (aij == 0.0) continue;
      for (std::size_t r = 0; r < b.rows; ++r)
        for (std::size_t c = 0; c < b.cols; ++c)
          k.at(i * b.rows + r, j * b.cols + c) = aij * b.at(r, c);
    }
  return k;
}

/// Orthonormal kernel basis via Gaussian elimination with partial pivoting
/// followed by Gram-Schmidt. Returned vectors z satisfy ||A z|| <= tol
/// relative to the matrix scale; callers re-verify residuals per sample.
inline std::vector<std::vector<double>> kernel_basis(const dense_matrix& m,
                                                     double pivot_tol = 1e-10) {
  const std::size_t rows = m.rows, cols = m.cols;
  dense_matrix u = m;
  double scale = 0.0;
  for (double v : u.a) scale = std::max(scale, std::fabs(v));
  if (scale == 0.0) scale = 1.0;
  const double tol = pivot_tol * scale;

  std::vector<std::size_t> pivot_col;
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t best = r;
    for (std::size_t i = r + 1; i < rows; ++i)
      if (std::fabs(u.at(i, c)) > std::fabs(u.at(best, c))) best = i;
    if (std::fabs(u.at(best, c)) <= tol) continue;
    if (best != r)
      for (std::size_t j = 0; j < cols; ++j) std::swap(u.at(r, j), u.at(best, j));
    const double inv = 1.0 / u.at(r, c);
    for (std::size_t j = 0; j < cols; ++j) u.at(r, j) *= inv;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r) continue;
      const double f = u.at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) u.at(i, j) -= f * u.at(r, j);
    }
    pivot_col.push_back(c);
    ++r;
  }

  std::vector<std::uint8_t> is_pivot(cols, 0);
  for (std::size_t c : pivot_col) is_pivot[c] = 1;
  std::vector<std::vector<double>> basis;
  for (std::size_t free_c = 0; free_c < cols; ++free_c) {
    if (is_pivot[free_c]) continue;
    std::vector<double> z(cols, 0.0);
    z[free_c] = 1.0;
    for (std::size_t i = 0; i < pivot_col.size(); ++i)
      z[pivot_col[i]] = -u.at(i, free_c);
    basis.push_back(std::move(z));
  }

  // Gram-Schmidt with re-orthogonalization pass.
  for (std::size_t i = 0; i < basis.size(); ++i) {
    auto& zi = basis[i];
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += zi[c] * basis[j][c];
        for (std::size_t c = 0; c < cols; ++c) zi[c] -= dot * basis[j][c];
      }
    double norm = 0.0;
    for (double v : zi) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : zi) v /= norm;
  }
  return basis;
}

/// In-place lower Cholesky factor; throws if the matrix is not positive
/// definite within `tol` on the diagonal.
inline dense_matrix cholesky(const dense_matrix& m, double tol = 0.0) {
  if (m.rows != m.cols) throw std::invalid_argument("cholesky: not square");
  const std::size_t n = m.rows;
  dense_matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (s <= tol) throw std::runtime_error("cholesky: matrix not positive definite");
        l.at(i, i) = std::sqrt(s);
      } else {
        l.at(i, j) = s / l.at(j, j);
      }
    }
  }
  return l;
}

/// Solves L L^T x = b given the lower factor.
inline std::vector<double> cholesky_solve(const dense_matrix& l,
                                          std::span<const double> b) {
  const std::size_t n = l.rows;
  if (b.size() != n) throw std::invalid_argument("cholesky_solve: shape");
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * y[k];
    y[i] = s / l.at(i, i);
  }
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l.at(k, ii) * x[k];
    x[ii] = s / l.at(ii, ii);
  }
  return x;
}

}  // namespace blockbp
