#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "blockbp/block_model.hpp"
#include "blockbp/rng.hpp"

namespace blockbp {

// Adjacency matrix of a left-d-regular bipartite graph, stored as per-column
// sorted row-index lists. Immutable after construction; matvec and adjoint
// are pure, so instances are safe to share across threads.
struct bipartite_expander {
  std::uint64_t n_rows = 0;
  std::uint64_t n_cols = 0;
  std::uint32_t degree = 0;
  std::uint64_t seed = 0;  // construction seed, 0 if loaded or hand-built
  std::vector<std::uint32_t> column_rows;  // n_cols * degree, column-major

  std::span<const std::uint32_t> column(std::size_t c) const {
    return {column_rows.data() + c * degree, degree};
  }

  /// Column-regularity invariant: every column holds exactly `degree`
  /// strictly ascending row indices below n_rows.
  void validate() const {
    if (n_rows == 0 || n_cols == 0)
      throw std::invalid_argument("expander: zero dimension");
    if (degree == 0 || degree > n_rows)
      throw std::invalid_argument("expander: degree must be in [1, n_rows]");
    if (column_rows.size() != n_cols * degree)
      throw std::invalid_argument("expander: column storage size mismatch");
    for (std::size_t c = 0; c < n_cols; ++c) {
      auto col = column(c);
      for (std::size_t i = 0; i < col.size(); ++i) {
        if (col[i] >= n_rows)
          throw std::invalid_argument("expander: row index out of range in column " +
                                      std::to_string(c));
        if (i > 0 && col[i] <= col[i - 1])
          throw std::invalid_argument(
              "expander: column " + std::to_string(c) +
              " is not strictly ascending");
      }
    }
  }
};

/// Random construction: each column's d row indices are drawn uniformly
/// without replacement from [0, n), independently per column. Column c uses
/// the stream seed derive_seed(seed, c), so the result does not depend on
/// construction order.
inline bipartite_expander construct_random(std::size_t p, std::size_t n,
                                           std::uint32_t d,
                                           std::uint64_t seed) {
  if (p == 0 || n == 0) throw std::invalid_argument("construct_random: zero dimension");
  if (d == 0 || d > n)
    throw std::invalid_argument("construct_random: degree " + std::to_string(d) +
                                " not in [1, " + std::to_string(n) + "]");
  bipartite_expander x;
  x.n_rows = n;
  x.n_cols = p;
  x.degree = d;
  x.seed = seed;
  x.column_rows.resize(p * static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < p; ++c) {
    rng col_rng(derive_seed(seed, c));
    auto rows = col_rng.sample_without_replacement(n, d);
    std::copy(rows.begin(), rows.end(), x.column_rows.begin() + c * d);
  }
  return x;
}

/// Builds an expander from explicit column lists (validated). Used for
/// degenerate shapes such as the identity sketch and for test fixtures.
inline bipartite_expander expander_from_columns(
    std::size_t n_rows, const std::vector<std::vector<std::uint32_t>>& cols) {
  if (cols.empty()) throw std::invalid_argument("expander_from_columns: no columns");
  bipartite_expander x;
  x.n_rows = n_rows;
  x.n_cols = cols.size();
  x.degree = static_cast<std::uint32_t>(cols.front().size());
  for (const auto& col : cols) {
    if (col.size() != x.degree)
      throw std::invalid_argument("expander_from_columns: ragged columns");
    auto sorted = col;
    std::sort(sorted.begin(), sorted.end());
    x.column_rows.insert(x.column_rows.end(), sorted.begin(), sorted.end());
  }
  x.validate();
  return x;
}

/// m x m identity as a degree-1 expander.
inline bipartite_expander identity_expander(std::size_t m) {
  bipartite_expander x;
  x.n_rows = m;
  x.n_cols = m;
  x.degree = 1;
  x.column_rows.resize(m);
  for (std::size_t i = 0; i < m; ++i)
    x.column_rows[i] = static_cast<std::uint32_t>(i);
  return x;
}

/// The experimentally calibrated degree rule d = ceil(22 * log(M) / g).
inline std::size_t experimental_degree(std::size_t num_groups,
                                       std::size_t group_size) {
  if (num_groups < 2 || group_size == 0)
    throw std::invalid_argument("experimental_degree: need M >= 2, g >= 1");
  return static_cast<std::size_t>(
      std::ceil(22.0 * std::log(static_cast<double>(num_groups)) /
                static_cast<double>(group_size)));
}

/// Theory degree rule ceil(C * log(k*M/eta) / (g*epsilon)). The absolute
/// constant is a calibration parameter (default 1); the source analysis also
/// admits the variant with eta dividing outside the logarithm, which differs
/// only in the effective constant.
inline std::size_t required_degree(std::size_t num_groups, std::size_t k,
                                   std::size_t group_size, double epsilon,
                                   double eta, double constant = 1.0) {
  if (num_groups < 2 || k == 0 || k > num_groups || group_size == 0)
    throw std::invalid_argument("required_degree: bad model parameters");
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw std::invalid_argument("required_degree: epsilon must be in (0, 1/2)");
  if (!(eta > 0.0 && eta < 1.0))
    throw std::invalid_argument("required_degree: eta must be in (0, 1)");
  if (!(constant > 0.0))
    throw std::invalid_argument("required_degree: constant must be positive");
  const double value =
      constant *
      std::log(static_cast<double>(k) * static_cast<double>(num_groups) / eta) /
      (static_cast<double>(group_size) * epsilon);
  return static_cast<std::size_t>(std::ceil(value));
}

struct measurement_count {
  std::size_t n = 0;
  bool clamped = false;  // true when the formula met or exceeded p
};

/// Measurement rule ceil(C2 * d*k*g / epsilon), clamped to p when a positive
/// ambient dimension is supplied and the formula reaches it.
inline measurement_count required_measurements(std::size_t d, std::size_t k,
                                               std::size_t group_size,
                                               double epsilon,
                                               double constant = 1.0,
                                               std::size_t p_clamp = 0) {
  if (d == 0 || k == 0 || group_size == 0)
    throw std::invalid_argument("required_measurements: non-positive input");
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw std::invalid_argument("required_measurements: epsilon must be in (0, 1/2)");
  if (!(constant > 0.0))
    throw std::invalid_argument("required_measurements: constant must be positive");
  const double value = constant * static_cast<double>(d) *
                       static_cast<double>(k) *
                       static_cast<double>(group_size) / epsilon;
  measurement_count out;
  out.n = static_cast<std::size_t>(std::ceil(value));
  if (p_clamp > 0 && out.n >= p_clamp) {
    out.n = p_clamp;
    out.clamped = true;
  }
  return out;
}

namespace detail {
inline void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": length " +
                                std::to_string(got) + ", expected " +
                                std::to_string(want));
}
}  // namespace detail

/// out[r] = sum of beta[c] over columns c whose list contains r.
inline void matvec(const bipartite_expander& x, std::span<const double> beta,
                   std::span<double> out) {
  detail::check_size(beta.size(), x.n_cols, "matvec input");
  detail::check_size(out.size(), x.n_rows, "matvec output");
  std::fill(out.begin(), out.end(), 0.0);
  const std::uint32_t* rows = x.column_rows.data();
  for (std::size_t c = 0; c < x.n_cols; ++c) {
    const double v = beta[c];
    if (v != 0.0)
      for (std::uint32_t i = 0; i < x.degree; ++i)
        out[rows[c * x.degree + i]] += v;
  }
}

inline std::vector<double> matvec(const bipartite_expander& x,
                                  std::span<const double> beta) {
  std::vector<double> out(x.n_rows);
  matvec(x, beta, out);
  return out;
}

/// out[c] = sum of v over the column's row list; the adjoint of matvec.
inline void adjoint_matvec(const bipartite_expander& x,
                           std::span<const double> v, std::span<double> out) {
  detail::check_size(v.size(), x.n_rows, "adjoint_matvec input");
  detail::check_size(out.size(), x.n_cols, "adjoint_matvec output");
  const std::uint32_t* rows = x.column_rows.data();
  for (std::size_t c = 0; c < x.n_cols; ++c) {
    double s = 0.0;
    for (std::uint32_t i = 0; i < x.degree; ++i)
      s += v[rows[c * x.degree + i]];
    out[c] = s;
  }
}

inline std::vector<double> adjoint_matvec(const bipartite_expander& x,
                                          std::span<const double> v) {
  std::vector<double> out(x.n_cols);
  adjoint_matvec(x, v, out);
  return out;
}

// Kronecker square of a base expander. The implied matrix is base (x) base
// with n_rows = base.n_rows^2, n_cols = base.n_cols^2 and d^2 ones per
// column; it is never materialized.
struct tensor_expander {
  bipartite_expander base;

  std::size_t n_rows() const { return base.n_rows * base.n_rows; }
  std::size_t n_cols() const { return base.n_cols * base.n_cols; }
};

/// (base (x) base) * beta via the identity vec(X Z X^T) = (X (x) X) vec(Z):
/// reshape beta to a column-major sqrt(p) x sqrt(p) matrix, apply the base
/// graph to each column, then fold the base graph in from the right.
inline void tensor_matvec(const tensor_expander& t, std::span<const double> beta,
                          std::span<double> out) {
  const std::size_t sp = t.base.n_cols, sn = t.base.n_rows;
  detail::check_size(beta.size(), sp * sp, "tensor_matvec input");
  detail::check_size(out.size(), sn * sn, "tensor_matvec output");
  // M1 = X Z, column by column.
  std::vector<double> m1(sn * sp);
  for (std::size_t j = 0; j < sp; ++j)
    matvec(t.base, beta.subspan(j * sp, sp), {m1.data() + j * sn, sn});
  // out = M1 X^T: column j of the result accumulates M1 columns whose base
  // column lists contain j.
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < sp; ++c) {
    auto col = t.base.column(c);
    for (std::uint32_t j : col) {
      double* dst = out.data() + static_cast<std::size_t>(j) * sn;
      const double* src = m1.data() + c * sn;
      for (std::size_t i = 0; i < sn; ++i) dst[i] += src[i];
    }
  }
}

inline std::vector<double> tensor_matvec(const tensor_expander& t,
                                         std::span<const double> beta) {
  std::vector<double> out(t.n_rows());
  tensor_matvec(t, beta, out);
  return out;
}

/// Adjoint of tensor_matvec: vec(X^T V X).
inline void tensor_adjoint_matvec(const tensor_expander& t,
                                  std::span<const double> v,
                                  std::span<double> out) {
  const std::size_t sp = t.base.n_cols, sn = t.base.n_rows;
  detail::check_size(v.size(), sn * sn, "tensor_adjoint_matvec input");
  detail::check_size(out.size(), sp * sp, "tensor_adjoint_matvec output");
  // A = X^T V, column by column.
  std::vector<double> a(sp * sn);
  for (std::size_t j = 0; j < sn; ++j)
    adjoint_matvec(t.base, v.subspan(j * sn, sn), {a.data() + j * sp, sp});
  // out = A X: column j sums the A columns indexed by base column j's rows.
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < sp; ++j) {
    double* dst = out.data() + j * sp;
    for (std::uint32_t r : t.base.column(j)) {
      const double* src = a.data() + static_cast<std::size_t>(r) * sp;
      for (std::size_t i = 0; i < sp; ++i) dst[i] += src[i];
    }
  }
}

inline std::vector<double> tensor_adjoint_matvec(const tensor_expander& t,
                                                 std::span<const double> v) {
  std::vector<double> out(t.n_cols());
  tensor_adjoint_matvec(t, v, out);
  return out;
}

struct expansion_report {
  std::size_t set_size = 0;   // left-node count k*g of each checked set
  double epsilon = 0.0;       // worst deficit: 1 - min |G(S)| / (d |S|)
  std::size_t sets_checked = 0;
  bool exhaustive = false;
  std::vector<std::uint32_t> worst_set;  // group indices

  nlohmann::json to_json() const {
    return {{"set_size", set_size},     {"epsilon", epsilon},
            {"sets_checked", sets_checked}, {"exhaustive", exhaustive},
            {"worst_set", worst_set}};
  }
};

struct expansion_mode {
  bool exhaustive = true;
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  static expansion_mode make_exhaustive() { return {}; }
  static expansion_mode sampled(std::size_t trials, std::uint64_t seed) {
    return {false, trials, seed};
  }
};

/// Number of k-subsets of M items, saturating at cap+1 to keep the
/// refusal message meaningful without overflow.
inline std::uint64_t binomial_capped(std::uint64_t m, std::uint64_t k,
                                     std::uint64_t cap) {
  if (k > m) return 0;
  k = std::min(k, m - k);
  unsigned __int128 result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    result = result * (m - k + i) / i;
    if (result > cap) return cap + 1;
  }
  return static_cast<std::uint64_t>(result);
}

namespace detail {

// Distinct-neighborhood counter with a stamp array so repeated set checks
// need no clearing.
class neighborhood_counter {
 public:
  explicit neighborhood_counter(std::size_t n_rows) : stamp_(n_rows, 0) {}

  std::size_t count(const bipartite_expander& x, const group_model& model,
                    std::span<const std::uint32_t> set) {
    ++current_;
    std::size_t distinct = 0;
    for (std::uint32_t gi : set)
      for (std::uint32_t c : model.group(gi))
        for (std::uint32_t r : x.column(c))
          if (stamp_[r] != current_) {
            stamp_[r] = current_;
            ++distinct;
          }
    return distinct;
  }

 private:
  std::vector<std::uint64_t> stamp_;
  std::uint64_t current_ = 0;
};

}  // namespace detail

/// Measures the worst expansion deficit over k-group sets: exhaustively over
/// all C(M, k) subsets (refused above `cap`), or over uniformly sampled
/// subsets. Exhaustive mode certifies the constant exactly for this (X, k).
inline expansion_report check_expansion(const bipartite_expander& x,
                                        const group_model& model,
                                        std::size_t k, expansion_mode mode,
                                        std::size_t cap = 1'000'000) {
  if (model.dim() != x.n_cols)
    throw std::invalid_argument("check_expansion: model dimension mismatch");
  const std::size_t m = model.num_groups();
  if (k == 0 || k > m)
    throw std::invalid_argument("check_expansion: k must be in [1, M]");

  expansion_report report;
  report.set_size = k * model.group_size();
  const double denom = static_cast<double>(x.degree) *
                       static_cast<double>(report.set_size);
  double min_ratio = 1.0;
  detail::neighborhood_counter counter(x.n_rows);

  auto visit = [&](std::span<const std::uint32_t> set) {
    const double ratio =
        static_cast<double>(counter.count(x, model, set)) / denom;
    ++report.sets_checked;
    if (ratio < min_ratio || report.worst_set.empty()) {
      min_ratio = ratio;
      report.worst_set.assign(set.begin(), set.end());
    }
  };

  if (mode.exhaustive) {
    const std::uint64_t total = binomial_capped(m, k, cap);
    if (total > cap)
      throw std::invalid_argument(
          "check_expansion: exhaustive mode needs more than " +
          std::to_string(cap) + " subsets (C(" + std::to_string(m) + ", " +
          std::to_string(k) + ") exceeds the cap); use sampled mode");
    std::vector<std::uint32_t> set(k);
    for (std::size_t i = 0; i < k; ++i) set[i] = static_cast<std::uint32_t>(i);
    while (true) {
      visit(set);
      // next lexicographic combination
      std::size_t i = k;
      while (i > 0 && set[i - 1] == m - k + i - 1) --i;
      if (i == 0) break;
      ++set[i - 1];
      for (std::size_t j = i; j < k; ++j) set[j] = set[j - 1] + 1;
    }
    report.exhaustive = true;
  } else {
    if (mode.trials == 0)
      throw std::invalid_argument("check_expansion: sampled mode needs trials >= 1");
    for (std::size_t t = 0; t < mode.trials; ++t) {
      rng trial_rng(derive_seed(mode.seed, t));
      auto set = trial_rng.sample_without_replacement(m, k);
      visit(set);
    }
  }

  report.epsilon = 1.0 - min_ratio;
  if (report.epsilon < 0.0) report.epsilon = 0.0;
  return report;
}

}  // namespace blockbp
