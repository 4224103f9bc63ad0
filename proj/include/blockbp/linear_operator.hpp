#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "blockbp/dense.hpp"
#include "blockbp/expander.hpp"
#include "blockbp/rng.hpp"
#include "blockbp/vec.hpp"

namespace blockbp {

enum class operator_kind { expander, tensor_expander, dense_gaussian, explicit_dense };

inline const char* to_string(operator_kind k) {
  switch (k) {
    case operator_kind::expander: return "expander";
    case operator_kind::tensor_expander: return "tensor-expander";
    case operator_kind::dense_gaussian: return "dense-gaussian";
    case operator_kind::explicit_dense: return "explicit-dense";
  }
  return "?";
}

// Matvec-only view of a measurement matrix. Value type; the backing storage
// is shared and immutable, so copies are cheap and thread-safe to apply.
struct linear_operator {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  operator_kind kind = operator_kind::explicit_dense;
  std::function<void(std::span<const double>, std::span<double>)> apply_fn;
  std::function<void(std::span<const double>, std::span<double>)> adjoint_fn;

  std::vector<double> apply(std::span<const double> beta) const {
    if (beta.size() != n_cols)
      throw std::invalid_argument("operator apply: length " +
                                  std::to_string(beta.size()) + ", expected " +
                                  std::to_string(n_cols));
    std::vector<double> out(n_rows);
    apply_fn(beta, out);
    return out;
  }

  std::vector<double> adjoint_apply(std::span<const double> v) const {
    if (v.size() != n_rows)
      throw std::invalid_argument("operator adjoint: length " +
                                  std::to_string(v.size()) + ", expected " +
                                  std::to_string(n_rows));
    std::vector<double> out(n_cols);
    adjoint_fn(v, out);
    return out;
  }
};

inline linear_operator make_operator(bipartite_expander x) {
  auto shared = std::make_shared<const bipartite_expander>(std::move(x));
  linear_operator op;
  op.n_rows = shared->n_rows;
  op.n_cols = shared->n_cols;
  op.kind = operator_kind::expander;
  op.apply_fn = [shared](std::span<const double> in, std::span<double> out) {
    matvec(*shared, in, out);
  };
  op.adjoint_fn = [shared](std::span<const double> in, std::span<double> out) {
    adjoint_matvec(*shared, in, out);
  };
  return op;
}

inline linear_operator make_operator(tensor_expander t) {
  auto shared = std::make_shared<const tensor_expander>(std::move(t));
  linear_operator op;
  op.n_rows = shared->n_rows();
  op.n_cols = shared->n_cols();
  op.kind = operator_kind::tensor_expander;
  op.apply_fn = [shared](std::span<const double> in, std::span<double> out) {
    tensor_matvec(*shared, in, out);
  };
  op.adjoint_fn = [shared](std::span<const double> in, std::span<double> out) {
    tensor_adjoint_matvec(*shared, in, out);
  };
  return op;
}

inline linear_operator make_dense_operator(
    dense_matrix m, operator_kind kind = operator_kind::explicit_dense) {
  auto shared = std::make_shared<const dense_matrix>(std::move(m));
  linear_operator op;
  op.n_rows = shared->rows;
  op.n_cols = shared->cols;
  op.kind = kind;
  op.apply_fn = [shared](std::span<const double> in, std::span<double> out) {
    for (std::size_t r = 0; r < shared->rows; ++r) {
      const double* row = shared->a.data() + r * shared->cols;
      double s = 0.0;
      for (std::size_t c = 0; c < shared->cols; ++c) s += row[c] * in[c];
      out[r] = s;
    }
  };
  op.adjoint_fn = [shared](std::span<const double> in, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < shared->rows; ++r) {
      const double vr = in[r];
      if (vr == 0.0) continue;
      const double* row = shared->a.data() + r * shared->cols;
      for (std::size_t c = 0; c < shared->cols; ++c) out[c] += vr * row[c];
    }
  };
  return op;
}

constexpr std::size_t default_dense_budget_bytes = std::size_t{2} << 30;  // 2 GiB

/// Dense matrix with i.i.d. N(0, 1/n) entries. Refuses allocations above the
/// byte budget so benchmark configs cannot silently exhaust memory.
inline linear_operator make_gaussian(std::size_t n, std::size_t p,
                                     std::uint64_t seed,
                                     std::size_t budget_bytes = default_dense_budget_bytes) {
  if (n == 0 || p == 0) throw std::invalid_argument("make_gaussian: zero dimension");
  const std::size_t bytes = n * p * sizeof(double);
  if (bytes > budget_bytes)
    throw std::runtime_error(
        "make_gaussian: dense " + std::to_string(n) + "x" + std::to_string(p) +
        " needs " + std::to_string(bytes) + " bytes, over the " +
        std::to_string(budget_bytes) + "-byte budget");
  dense_matrix m(n, p);
  rng gen(seed);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& v : m.a) v = sigma * gen.next_normal();
  return make_dense_operator(std::move(m), operator_kind::dense_gaussian);
}

/// Same operator with every entry multiplied by `factor`.
inline linear_operator scaled(linear_operator op, double factor) {
  linear_operator out = op;
  out.apply_fn = [inner = op.apply_fn, factor](std::span<const double> in,
                                               std::span<double> o) {
    inner(in, o);
    for (double& v : o) v *= factor;
  };
  out.adjoint_fn = [inner = op.adjoint_fn, factor](std::span<const double> in,
                                                   std::span<double> o) {
    inner(in, o);
    for (double& v : o) v *= factor;
  };
  return out;
}

/// Spectral norm estimate by power iteration on X^T X from a seeded random
/// start. Step-size code multiplies this by a safety factor since power
/// iteration approaches the true norm from below.
inline double estimate_opnorm(const linear_operator& op, std::size_t iters,
                              std::uint64_t seed) {
  if (iters == 0) throw std::invalid_argument("estimate_opnorm: iters >= 1");
  rng gen(seed);
  std::vector<double> v(op.n_cols);
  for (double& x : v) x = gen.next_normal();
  double nv = norm2(v);
  if (nv == 0.0) return 0.0;
  scale(v, 1.0 / nv);
  std::vector<double> xv(op.n_rows), xtxv(op.n_cols);
  double sigma = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    op.apply_fn(v, xv);
    op.adjoint_fn(xv, xtxv);
    const double lambda = norm2(xtxv);
    if (lambda == 0.0) return 0.0;  // v in the kernel and no growth: zero-ish operator
    sigma = std::sqrt(lambda);
    v = xtxv;
    scale(v, 1.0 / lambda);
  }
  return sigma;
}

}  // namespace blockbp
