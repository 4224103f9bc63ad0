#pragma once

#include <algorithm>
#include <chrono>
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
#include "blockbp/linear_operator.hpp"
#include "blockbp/vec.hpp"

namespace blockbp {

enum class constraint_kind { equality, l1_ball, l2_ball };

inline const char* to_string(constraint_kind c) {
  switch (c) {
    case constraint_kind::equality: return "equality";
    case constraint_kind::l1_ball: return "l1_ball";
    case constraint_kind::l2_ball: return "l2_ball";
  }
  return "?";
}

/// Minimize the group norm (or plain l1 norm when no model is given) subject
/// to the measurements: exactly y = X beta, or within an l1/l2 residual ball
/// of the given radius around y.
struct recovery_problem {
  linear_operator op;
  std::vector<double> y;
  std::optional<group_model> model;  // nullopt selects the l1 objective
  constraint_kind constraint = constraint_kind::equality;
  double radius = 0.0;
};

struct solver_config {
  std::size_t max_iter = 50'000;
  double rel_tol = 1e-6;      // on the relative step change
  double step_ratio = 1.0;    // tau = ratio/L, sigma = 1/(ratio*L)
  std::size_t norm_estimate_iters = 100;
  bool record_trace = false;
  std::uint64_t opnorm_seed = 0x9e3779b9;
  // Wall-clock cap per solve, 0 = none. A capped stop reports converged =
  // false; iteration counts under a cap are time-dependent, so capped runs
  // are excluded from byte-determinism guarantees.
  double max_seconds = 0.0;
};

struct trace_entry {
  double objective = 0.0;
  double residual_l2 = 0.0;
  double step_change = 0.0;
};

struct solver_report {
  std::vector<double> beta_hat;
  std::vector<double> dual;  // final dual iterate; -X^T dual is the certificate
  std::size_t iterations = 0;
  bool converged = false;
  double primal_residual_l1 = 0.0;
  double primal_residual_l2 = 0.0;
  double objective = 0.0;
  double wall_seconds = 0.0;
  std::vector<trace_entry> trace;

  nlohmann::json to_json() const {
    nlohmann::json j{{"iterations", iterations},
                     {"converged", converged},
                     {"primal_residual_l1", primal_residual_l1},
                     {"primal_residual_l2", primal_residual_l2},
                     {"objective", objective},
                     {"wall_seconds", wall_seconds},
                     {"beta_hat", beta_hat}};
    if (!trace.empty()) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& t : trace)
        rows.push_back({{"objective", t.objective},
                        {"residual_l2", t.residual_l2},
                        {"step_change", t.step_change}});
      j["trace"] = rows;
    }
    return j;
  }
};

/// Euclidean projection onto the l1 ball of the given radius (Duchi et al.
/// sort-based algorithm, O(n log n)).
inline void project_l1_ball(std::span<double> v, double radius) {
  if (radius < 0.0) throw std::invalid_argument("project_l1_ball: negative radius");
  if (norm1(v) <= radius) return;
  if (radius == 0.0) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  std::vector<double> mags(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mags[i] = std::fabs(v[i]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < mags.size(); ++j) {
    cumulative += mags[j];
    const double candidate = (cumulative - radius) / static_cast<double>(j + 1);
    if (mags[j] - candidate <= 0.0) break;
    theta = candidate;
  }
  for (double& x : v) {
    const double shrunk = std::fabs(x) - theta;
    x = shrunk > 0.0 ? (x > 0.0 ? shrunk : -shrunk) : 0.0;
  }
}

inline void scalar_soft_threshold(std::span<double> v, double tau) {
  for (double& x : v) {
    if (x > tau)
      x -= tau;
    else if (x < -tau)
      x += tau;
    else
      x = 0.0;
  }
}

/// (||X beta - y||_1, ||X beta - y||_2)
inline std::pair<double, double> residuals(const recovery_problem& problem,
                                           std::span<const double> beta_hat) {
  auto r = problem.op.apply(beta_hat);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= problem.y[i];
  return {norm1(r), norm2(r)};
}

namespace detail {

inline void validate_problem(const recovery_problem& problem) {
  if (problem.y.size() != problem.op.n_rows)
    throw std::invalid_argument("solve: y length does not match operator rows");
  for (double v : problem.y)
    if (!std::isfinite(v))
      throw std::invalid_argument("solve: y contains a non-finite value");
  if (problem.model && problem.model->dim() != problem.op.n_cols)
    throw std::invalid_argument("solve: model dimension does not match operator");
  if (problem.constraint != constraint_kind::equality &&
      !(problem.radius >= 0.0 && std::isfinite(problem.radius)))
    throw std::invalid_argument("solve: ball radius must be finite and nonnegative");
}

}  // namespace detail

// First-order primal-dual iteration (Chambolle-Pock form) using only
// apply/adjoint_apply. The primal prox is the (group) soft threshold, the
// dual prox comes from the constraint set via Moreau decomposition.
//
// The primal starts at the one-step least-squares point alpha * X^T y, which
// is deterministic, costs two matvecs, and starts the objective trace above
// the optimum instead of ramping up from zero.
inline solver_report solve(const recovery_problem& problem,
                           const solver_config& config = {}) {
  detail::validate_problem(problem);
  if (config.max_iter == 0 || !(config.rel_tol > 0.0) || !(config.step_ratio > 0.0))
    throw std::invalid_argument("solve: bad solver configuration");
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t n = problem.op.n_rows, p = problem.op.n_cols;
  double opnorm = estimate_opnorm(problem.op, config.norm_estimate_iters,
                                  config.opnorm_seed);
  if (opnorm == 0.0) opnorm = 1.0;
  const double L = 1.01 * opnorm;
  const double tau = config.step_ratio / L;
  const double sigma = 1.0 / (config.step_ratio * L);

  auto objective_of = [&](std::span<const double> b) {
    return problem.model ? l21_norm(*problem.model, b) : norm1(b);
  };

  std::vector<double> beta(p, 0.0);
  if (norm2(problem.y) > 0.0) {
    std::vector<double> g0 = problem.op.adjoint_apply(problem.y);
    std::vector<double> xg0(n);
    problem.op.apply_fn(g0, xg0);
    const double denom = dot(xg0, xg0);
    if (denom > 0.0) {
      const double alpha = dot(xg0, problem.y) / denom;
      for (std::size_t i = 0; i < p; ++i) beta[i] = alpha * g0[i];
    }
  }

  std::vector<double> beta_bar = beta;
  std::vector<double> v(n, 0.0);
  std::vector<double> xb(n), u(n), w(n), grad(p), beta_new(p);

  solver_report report;
  report.converged = false;

  std::size_t it = 0;
  for (it = 1; it <= config.max_iter; ++it) {
    problem.op.apply_fn(beta_bar, xb);
    for (std::size_t i = 0; i < n; ++i) u[i] = v[i] + sigma * xb[i];
    switch (problem.constraint) {
      case constraint_kind::equality:
        for (std::size_t i = 0; i < n; ++i) v[i] = u[i] - sigma * problem.y[i];
        break;
      case constraint_kind::l2_ball: {
        for (std::size_t i = 0; i < n; ++i) w[i] = u[i] / sigma - problem.y[i];
        const double nd = norm2(w);
        const double shrink = nd > problem.radius ? problem.radius / nd : 1.0;
        for (std::size_t i = 0; i < n; ++i)
          v[i] = u[i] - sigma * (problem.y[i] + shrink * w[i]);
        break;
      }
      case constraint_kind::l1_ball: {
        for (std::size_t i = 0; i < n; ++i) w[i] = u[i] / sigma - problem.y[i];
        project_l1_ball(w, problem.radius);
        for (std::size_t i = 0; i < n; ++i)
          v[i] = u[i] - sigma * (problem.y[i] + w[i]);
        break;
      }
    }

    problem.op.adjoint_fn(v, grad);
    for (std::size_t i = 0; i < p; ++i) beta_new[i] = beta[i] - tau * grad[i];
    if (problem.model)
      group_soft_threshold_inplace(*problem.model, beta_new, tau);
    else
      scalar_soft_threshold(beta_new, tau);

    const double step = norm2_diff(beta_new, beta);
    for (std::size_t i = 0; i < p; ++i) {
      beta_bar[i] = 2.0 * beta_new[i] - beta[i];
      beta[i] = beta_new[i];
    }

    const double nb = norm2(beta);
    const double rel = step == 0.0
                           ? 0.0
                           : (nb > 0.0 ? step / nb
                                       : std::numeric_limits<double>::infinity());
    if (config.record_trace) {
      trace_entry t;
      t.objective = objective_of(beta);
      problem.op.apply_fn(beta, xb);
      for (std::size_t i = 0; i < n; ++i) xb[i] -= problem.y[i];
      t.residual_l2 = norm2(xb);
      t.step_change = rel;
      report.trace.push_back(t);
    }
    if (rel <= config.rel_tol) {
      report.converged = true;
      break;
    }
    if (config.max_seconds > 0.0 && it % 128 == 0) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (elapsed >= config.max_seconds) break;
    }
  }

  report.iterations = std::min(it, config.max_iter);
  report.beta_hat = std::move(beta);
  report.dual = std::move(v);
  auto [r1, r2] = residuals(problem, report.beta_hat);
  report.primal_residual_l1 = r1;
  report.primal_residual_l2 = r2;
  report.objective = objective_of(report.beta_hat);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace blockbp
