#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockbp/block_model.hpp"
#include "blockbp/dense.hpp"
#include "blockbp/expander.hpp"
#include "blockbp/format.hpp"
#include "blockbp/rng.hpp"
#include "blockbp/vec.hpp"

namespace blockbp {

struct feasibility_thresholds {
  double ours = 0.0;     // 1 / (2 (1 + 2g)); the group-aware guarantee
  double berinde = 0.0;  // 1/6, independent of g
};

inline feasibility_thresholds feasibility_region(std::size_t g) {
  if (g == 0) throw std::invalid_argument("feasibility_region: g >= 1");
  return {1.0 / (2.0 * (1.0 + 2.0 * static_cast<double>(g))), 1.0 / 6.0};
}

namespace detail {

inline void check_eps_domain(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw std::invalid_argument("epsilon must be in (0, 1/2)");
}

/// 2 / (1 - 4 eps g / (1 - 2 eps)) on [0, 1/2); empty when the denominator
/// is not positive.
inline std::optional<double> error_constant(double epsilon, std::size_t g) {
  const double denom =
      1.0 - 4.0 * epsilon * static_cast<double>(g) / (1.0 - 2.0 * epsilon);
  if (!(denom > 0.0)) return std::nullopt;
  return 2.0 / denom;
}

}  // namespace detail

/// The group-norm error constant of the main guarantee; empty when epsilon
/// is outside the feasible region for this group size.
inline std::optional<double> theorem1_constant(double epsilon, std::size_t g) {
  detail::check_eps_domain(epsilon);
  if (g == 0) throw std::invalid_argument("theorem1_constant: g >= 1");
  return detail::error_constant(epsilon, g);
}

/// The constant obtained by transporting the plain-l1 guarantee into group
/// norms: 2 sqrt(g) / (1 - 4 eps/(1-2 eps)), valid only for eps < 1/6.
inline std::optional<double> naive_l1_constant(double epsilon, std::size_t g) {
  detail::check_eps_domain(epsilon);
  if (g == 0) throw std::invalid_argument("naive_l1_constant: g >= 1");
  const double denom = 1.0 - 4.0 * epsilon / (1.0 - 2.0 * epsilon);
  if (!(denom > 0.0)) return std::nullopt;
  return 2.0 * std::sqrt(static_cast<double>(g)) / denom;
}

/// Worst exhaustive expansion deficit over all group-set sizes t = 1..levels.
/// The error-bound proof applies the expansion property to unions of two
/// k-group sets, so theory verification certifies up to levels = min(2k, M).
inline double certify_model_epsilon(const bipartite_expander& x,
                                    const group_model& model,
                                    std::size_t levels,
                                    std::size_t cap = 1'000'000) {
  double eps = 0.0;
  const std::size_t top = std::min(levels, model.num_groups());
  for (std::size_t t = 1; t <= top; ++t) {
    auto rep = check_expansion(x, model, t, expansion_mode::make_exhaustive(), cap);
    eps = std::max(eps, rep.epsilon);
  }
  return eps;
}

struct bound_certificate {
  double epsilon = 0.0;
  std::size_t g = 0;
  bool certified = false;  // epsilon came from exhaustive certification
  bool feasible = false;   // epsilon < 1/(2(1+2g))
  double constant_c1 = std::numeric_limits<double>::quiet_NaN();
  double noise_constant = std::numeric_limits<double>::quiet_NaN();
  double tail = 0.0;      // group-norm mass outside the best k groups
  double gamma = 0.0;     // l1 measurement residual fed to the noisy bound
  double predicted_error = std::numeric_limits<double>::quiet_NaN();
  double measured_error = 0.0;
  bool satisfied = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"epsilon", epsilon},
                     {"g", g},
                     {"certified", certified},
                     {"feasible", feasible},
                     {"tail", tail},
                     {"gamma", gamma},
                     {"measured_error", measured_error},
                     {"satisfied", satisfied}};
    if (feasible) {
      j["constant_c1"] = constant_c1;
      j["noise_constant"] = noise_constant;
      j["predicted_error"] = predicted_error;
    } else {
      j["constant_c1"] = "infeasible";
      j["noise_constant"] = "infeasible";
      j["predicted_error"] = "infeasible";
    }
    return j;
  }
};

/// Evaluates the error bound for one recovered instance: measured group-norm
/// error against C1 * tail + noise_constant * gamma. gamma = 0 reproduces
/// the equality-constrained statement. epsilon may be 0 (collision-free
/// certificates); the constants are the continuous limits there.
inline bound_certificate verify_theorem1(const group_model& model,
                                         std::size_t k, double epsilon,
                                         bool certified,
                                         std::span<const double> beta_star,
                                         std::span<const double> beta_hat,
                                         double gamma = 0.0) {
  if (!(epsilon >= 0.0 && epsilon < 0.5))
    throw std::invalid_argument("verify_theorem1: epsilon must be in [0, 1/2)");
  if (gamma < 0.0) throw std::invalid_argument("verify_theorem1: negative gamma");
  if (beta_star.size() != model.dim() || beta_hat.size() != model.dim())
    throw std::invalid_argument("verify_theorem1: vector/model shape mismatch");

  bound_certificate cert;
  cert.epsilon = epsilon;
  cert.g = model.group_size();
  cert.certified = certified;
  cert.gamma = gamma;

  std::vector<double> diff(model.dim());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = beta_star[i] - beta_hat[i];
  cert.measured_error = l21_norm(model, diff);

  const auto support = best_k_block_support(model, beta_star, k);
  auto head = restrict_to(model, beta_star, support);
  for (std::size_t i = 0; i < head.size(); ++i) head[i] = beta_star[i] - head[i];
  cert.tail = l21_norm(model, head);

  const auto c = detail::error_constant(epsilon, cert.g);
  cert.feasible = c.has_value();
  if (c) {
    cert.constant_c1 = *c;
    cert.noise_constant = *c / 2.0;
    cert.predicted_error = cert.constant_c1 * cert.tail + cert.noise_constant * gamma;
    const double scale = std::max({1.0, l21_norm(model, beta_star), cert.measured_error});
    cert.satisfied = cert.measured_error <= cert.predicted_error + 1e-9 * scale;
  }
  return cert;
}

struct kernel_lemma_report {
  std::size_t kernel_dim = 0;
  std::size_t samples = 0;
  std::size_t violations = 0;
  double epsilon = 0.0;
  double bound_constant = std::numeric_limits<double>::quiet_NaN();
  double max_ratio = 0.0;  // largest observed best-k share of the group mass
  bool vacuous = false;          // trivial kernel, nothing to test
  bool hypothesis_void = false;  // epsilon >= 1/2, bound formula inapplicable

  nlohmann::json to_json() const {
    return {{"kernel_dim", kernel_dim},   {"samples", samples},
            {"violations", violations},   {"epsilon", epsilon},
            {"bound_constant", bound_constant}, {"max_ratio", max_ratio},
            {"vacuous", vacuous},         {"hypothesis_void", hypothesis_void}};
  }
};

/// Samples random kernel vectors of the materialized matrix and checks that
/// the best-k group mass never exceeds (2 eps g / (1 - 2 eps)) times the
/// total group mass. Each sample's kernel residual is re-verified against
/// the sparse matvec before it is used.
inline kernel_lemma_report verify_kernel_lemma(const bipartite_expander& x,
                                               const group_model& model,
                                               std::size_t k, double epsilon,
                                               std::size_t trials,
                                               std::uint64_t seed) {
  if (model.dim() != x.n_cols)
    throw std::invalid_argument("verify_kernel_lemma: model dimension mismatch");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("verify_kernel_lemma: epsilon out of [0, 1]");

  kernel_lemma_report report;
  report.epsilon = epsilon;
  if (epsilon >= 0.5) {
    report.hypothesis_void = true;
    return report;
  }
  report.bound_constant = 2.0 * epsilon * static_cast<double>(model.group_size()) /
                          (1.0 - 2.0 * epsilon);

  const auto basis = kernel_basis(materialize(x));
  report.kernel_dim = basis.size();
  if (basis.empty()) {
    report.vacuous = true;
    return report;
  }

  std::vector<double> z(x.n_cols), xz(x.n_rows);
  for (std::size_t t = 0; t < trials; ++t) {
    rng gen(derive_seed(seed, t));
    std::fill(z.begin(), z.end(), 0.0);
    for (const auto& b : basis) {
      const double c = gen.next_normal();
      axpy(z, c, b);
    }
    const double nz = norm2(z);
    if (nz == 0.0) continue;
    matvec(x, z, xz);
    if (norm2(xz) > 1e-10 * nz)
      throw std::runtime_error(
          "verify_kernel_lemma: kernel sample failed the residual check");

    const auto norms = group_norms(model, z);
    double total = 0.0;
    for (double v : norms) total += v;
    const auto support = best_k_block_support(model, z, k);
    double head = 0.0;
    for (std::uint32_t gi : support.groups) head += norms[gi];
    ++report.samples;
    if (total > 0.0) report.max_ratio = std::max(report.max_ratio, head / total);
    if (head > report.bound_constant * total + 1e-12 * std::max(1.0, total))
      ++report.violations;
  }
  return report;
}

enum class probe_mode { per_matrix_exhaustive, per_matrix_sampled };

struct expansion_probability_estimate {
  std::size_t num_groups = 0, k = 0, group_size = 0, degree = 0, n_rows = 0;
  double epsilon = 0.0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double estimate = 0.0;
  double target = 1.0;  // 1 - eta
  std::size_t sets_per_trial = 0;

  nlohmann::json to_json() const {
    return {{"M", num_groups},   {"k", k},           {"g", group_size},
            {"d", degree},       {"n", n_rows},      {"epsilon", epsilon},
            {"trials", trials},  {"successes", successes},
            {"estimate", estimate}, {"target", target},
            {"sets_per_trial", sets_per_trial}};
  }
};

/// Draws independent random expanders and measures how often every t-group
/// set (t = 1..k) expands to at least (1 - eps) d t g distinct rows:
/// exhaustively over all sum_t C(M, t) sets, or over sampled sets per level.
inline expansion_probability_estimate estimate_expansion_probability(
    std::size_t num_groups, std::size_t k, std::size_t group_size,
    std::uint32_t degree, std::size_t n_rows, double epsilon,
    std::size_t trials, std::uint64_t seed, probe_mode mode,
    std::size_t sampled_sets_per_level = 200, double eta = 0.0,
    std::size_t cap = 1'000'000) {
  if (trials == 0)
    throw std::invalid_argument("estimate_expansion_probability: trials >= 1");
  if (k == 0 || k > num_groups)
    throw std::invalid_argument("estimate_expansion_probability: k in [1, M]");
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw std::invalid_argument("estimate_expansion_probability: epsilon in [0, 1)");

  if (mode == probe_mode::per_matrix_exhaustive) {
    std::uint64_t total_sets = 0;
    for (std::size_t t = 1; t <= k; ++t) {
      total_sets += binomial_capped(num_groups, t, cap);
      if (total_sets > cap)
        throw std::invalid_argument(
            "estimate_expansion_probability: exhaustive mode needs more than " +
            std::to_string(cap) + " sets per trial; use sampled mode");
    }
  }

  const std::size_t p = num_groups * group_size;
  const auto model = group_model::consecutive(p, group_size);

  expansion_probability_estimate est;
  est.num_groups = num_groups;
  est.k = k;
  est.group_size = group_size;
  est.degree = degree;
  est.n_rows = n_rows;
  est.epsilon = epsilon;
  est.trials = trials;
  est.target = 1.0 - eta;

  for (std::size_t trial = 0; trial < trials; ++trial) {
    const auto x = construct_random(p, n_rows, degree, derive_seed(seed, trial));
    bool ok = true;
    std::size_t sets_seen = 0;
    for (std::size_t t = 1; t <= k; ++t) {
      const auto mode_t =
          mode == probe_mode::per_matrix_exhaustive
              ? expansion_mode::make_exhaustive()
              : expansion_mode::sampled(sampled_sets_per_level,
                                        derive_seed(seed, trial, t));
      const auto rep = check_expansion(x, model, t, mode_t, cap);
      sets_seen += rep.sets_checked;
      if (rep.epsilon > epsilon + 1e-12) {
        ok = false;
        // keep scanning levels so sets_per_trial stays constant across trials
      }
    }
    est.sets_per_trial = sets_seen;
    if (ok) ++est.successes;
  }
  est.estimate = static_cast<double>(est.successes) / static_cast<double>(trials);
  return est;
}

// Analytic apparatus from the sampling-complexity argument, kept as a
// plotting aid: the union-bound exponent for level t combines the counting
// entropy M*H(t/M) with the per-set failure exponent. The absolute constant
// mu is unspecified in the source analysis, so this is not a runtime bound.
inline double binary_entropy(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return -x * std::log(x) - (1.0 - x) * std::log(1.0 - x);
}

inline double psi_exponent(std::size_t num_groups, std::size_t t,
                           std::size_t group_size, std::uint32_t degree,
                           std::size_t n_rows, double epsilon, double mu) {
  const double m = static_cast<double>(num_groups);
  const double tg = static_cast<double>(t) * static_cast<double>(group_size);
  const double arg = mu * epsilon * static_cast<double>(n_rows) /
                     (static_cast<double>(degree) * tg);
  return m * binary_entropy(static_cast<double>(t) / m) -
         epsilon * static_cast<double>(degree) * tg * std::log(arg);
}

/// Union-bound failure mass sum_{t<=k} exp(psi_exponent(t)).
inline double psi_failure_bound(std::size_t num_groups, std::size_t k,
                                std::size_t group_size, std::uint32_t degree,
                                std::size_t n_rows, double epsilon, double mu) {
  double s = 0.0;
  for (std::size_t t = 1; t <= k; ++t)
    s += std::exp(psi_exponent(num_groups, t, group_size, degree, n_rows, epsilon, mu));
  return s;
}

/// Grid comparison of both error constants plus the psi failure bound.
/// Columns: epsilon,g,ours_feasible,c1,naive_c,psi_value
inline std::string feasibility_psi_csv(std::span<const double> eps_grid,
                                       std::span<const std::size_t> g_grid,
                                       std::size_t num_groups, std::size_t k,
                                       std::uint32_t degree, std::size_t n_rows,
                                       double mu) {
  std::string out = "epsilon,g,ours_feasible,c1,naive_c,psi_value\n";
  for (std::size_t g : g_grid)
    for (double eps : eps_grid) {
      const auto c1 = theorem1_constant(eps, g);
      const auto naive = naive_l1_constant(eps, g);
      out += format_double(eps);
      out += ',';
      out += std::to_string(g);
      out += ',';
      out += c1 ? '1' : '0';
      out += ',';
      out += c1 ? format_double(*c1) : std::string("inf");
      out += ',';
      out += naive ? format_double(*naive) : std::string("inf");
      out += ',';
      out += format_double(psi_failure_bound(num_groups, k, g, degree, n_rows, eps, mu));
      out += '\n';
    }
  return out;
}

}  // namespace blockbp
