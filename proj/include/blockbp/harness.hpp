#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "blockbp/analysis.hpp"
#include "blockbp/block_model.hpp"
#include "blockbp/dense.hpp"
#include "blockbp/expander.hpp"
#include "blockbp/format.hpp"
#include "blockbp/linear_operator.hpp"
#include "blockbp/rng.hpp"
#include "blockbp/solver.hpp"
#include "blockbp/vec.hpp"

namespace blockbp {

constexpr double success_error_threshold = 1e-5;  // ||beta_hat - beta*||_2

enum class matrix_choice { expander, gaussian, both };
enum class objective_choice { l1, l21, both };
enum class signal_choice { gaussian, pm1, both };

inline const char* to_string(matrix_choice m) {
  switch (m) {
    case matrix_choice::expander: return "expander";
    case matrix_choice::gaussian: return "gaussian";
    case matrix_choice::both: return "both";
  }
  return "?";
}

/// Worker count resolution: explicit value, else EXPANDER_BP_THREADS, else
/// hardware concurrency.
inline std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("EXPANDER_BP_THREADS")) {
    const long v = std::atol(env);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(0..count) across a pool. Each index owns its output slot and all
/// seeds derive from the index, so the result set is independent of the
/// worker count and of scheduling order.
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  threads = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct experiment_config {
  std::size_t p = 1000;
  std::size_t num_groups = 100;  // M
  std::size_t k = 8;
  // group size g is p / M
  std::vector<double> n_grid;    // entries < 1 are fractions of p; empty = default
  matrix_choice matrix = matrix_choice::expander;
  objective_choice objective = objective_choice::both;
  signal_choice signal = signal_choice::both;
  std::uint32_t degree = 0;      // 0 = experimental degree rule
  std::size_t monte_carlo = 10;
  std::uint64_t master_seed = 1;
  solver_config solver;
  double wall_clock_cap_seconds = 0.0;  // per solve, 0 = none
  std::size_t threads = 0;              // 0 = auto
  std::size_t dense_budget_bytes = default_dense_budget_bytes;
  // timing-experiment grids
  std::vector<std::size_t> timing_p_grid = {10'000, 20'000};
  std::vector<std::size_t> timing_kg_grid = {300};

  std::size_t group_size() const {
    if (num_groups == 0 || p % num_groups != 0)
      throw std::invalid_argument("experiment_config: p must be a multiple of M");
    return p / num_groups;
  }

  std::uint32_t effective_degree(std::size_t m, std::size_t g) const {
    return degree > 0 ? degree
                      : static_cast<std::uint32_t>(experimental_degree(m, g));
  }

  /// Absolute measurement counts; fractional entries scale with p.
  std::vector<std::size_t> resolve_n_grid() const {
    std::vector<double> grid = n_grid;
    if (grid.empty())
      for (int i = 2; i <= 10; ++i) grid.push_back(0.05 * i);  // 0.10 .. 0.50
    std::vector<std::size_t> out;
    for (double v : grid) {
      const std::size_t n = v < 1.0
                                ? static_cast<std::size_t>(std::ceil(v * static_cast<double>(p)))
                                : static_cast<std::size_t>(v);
      if (n == 0 || n > p)
        throw std::invalid_argument("experiment_config: grid entry out of (0, p]");
      out.push_back(n);
    }
    return out;
  }

  nlohmann::json to_json() const {
    return {{"p", p},
            {"M", num_groups},
            {"g", group_size()},
            {"k", k},
            {"n_grid", resolve_n_grid()},
            {"n_grid_default", n_grid.empty()},
            {"matrix", to_string(matrix)},
            {"objective", objective == objective_choice::both
                              ? "both"
                              : (objective == objective_choice::l1 ? "l1" : "l21")},
            {"signal", signal == signal_choice::both
                           ? "both"
                           : (signal == signal_choice::gaussian ? "gaussian" : "pm1")},
            {"degree", degree == 0 ? nlohmann::json("experimental-rule")
                                   : nlohmann::json(degree)},
            {"monte_carlo", monte_carlo},
            {"master_seed", master_seed},
            {"wall_clock_cap_seconds", wall_clock_cap_seconds},
            {"rel_tol", solver.rel_tol},
            {"max_iter", solver.max_iter}};
  }
};

struct trial_record {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0, p = 0, num_groups = 0, group_size = 0, k = 0;
  std::string method;  // objective plus signal kind, e.g. "l21-pm1"
  std::string matrix;  // "expander" | "gaussian"
  bool success = false;
  double err_l2 = 0.0;
  double err_l21 = 0.0;
  double residual_l1 = 0.0;
  double time_ms = 0.0;
  std::size_t iters = 0;
  bool converged = false;
};

inline const char* trial_csv_header() {
  return "schema,experiment,trial,seed,n,p,M,g,k,method,matrix,success,"
         "err_l2,err_l21,residual_l1,time_ms,iters,converged";
}

inline std::string trial_csv_row(const trial_record& r, const std::string& experiment) {
  std::string out = "1,";
  out += experiment;
  out += ',' + std::to_string(r.trial);
  out += ',' + std::to_string(r.seed);
  out += ',' + std::to_string(r.n);
  out += ',' + std::to_string(r.p);
  out += ',' + std::to_string(r.num_groups);
  out += ',' + std::to_string(r.group_size);
  out += ',' + std::to_string(r.k);
  out += ',' + r.method;
  out += ',' + r.matrix;
  out += r.success ? ",1" : ",0";
  out += ',' + format_double(r.err_l2);
  out += ',' + format_double(r.err_l21);
  out += ',' + format_double(r.residual_l1);
  out += ',' + format_double(r.time_ms);
  out += ',' + std::to_string(r.iters);
  out += r.converged ? ",1" : ",0";
  return out;
}

/// Drops the time_ms column so reruns can be compared byte for byte.
inline std::string strip_time_column(const std::string& csv) {
  std::string out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t col = 0, start = 0;
    std::string kept;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (col != 15) {  // time_ms position in the fixed schema
          if (!kept.empty()) kept += ',';
          kept += line.substr(start, i - start);
        }
        start = i + 1;
        ++col;
      }
    }
    out += kept;
    out += '\n';
  }
  return out;
}

namespace detail {

/// k-block-sparse unit vector on a seeded random support.
inline std::vector<double> plant_signal(const group_model& model, std::size_t k,
                                        bool pm1, std::uint64_t seed) {
  rng gen(seed);
  auto support = gen.sample_without_replacement(model.num_groups(), k);
  std::vector<double> beta(model.dim(), 0.0);
  for (std::uint32_t gi : support)
    for (std::uint32_t idx : model.group(gi))
      beta[idx] = pm1 ? (gen.next_u64() & 1 ? 1.0 : -1.0) : gen.next_normal();
  const double nb = norm2(beta);
  if (nb > 0.0) scale(beta, 1.0 / nb);
  return beta;
}

struct method_axes {
  std::vector<bool> objectives_l21;  // false = l1, true = l21
  std::vector<bool> signals_pm1;     // false = gaussian, true = pm1
  std::vector<matrix_choice> matrices;
};

inline method_axes resolve_axes(const experiment_config& cfg) {
  method_axes ax;
  if (cfg.objective == objective_choice::l1 || cfg.objective == objective_choice::both)
    ax.objectives_l21.push_back(false);
  if (cfg.objective == objective_choice::l21 || cfg.objective == objective_choice::both)
    ax.objectives_l21.push_back(true);
  if (cfg.signal == signal_choice::gaussian || cfg.signal == signal_choice::both)
    ax.signals_pm1.push_back(false);
  if (cfg.signal == signal_choice::pm1 || cfg.signal == signal_choice::both)
    ax.signals_pm1.push_back(true);
  if (cfg.matrix == matrix_choice::expander || cfg.matrix == matrix_choice::both)
    ax.matrices.push_back(matrix_choice::expander);
  if (cfg.matrix == matrix_choice::gaussian || cfg.matrix == matrix_choice::both)
    ax.matrices.push_back(matrix_choice::gaussian);
  return ax;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace detail

struct phase_result {
  std::vector<trial_record> trials;
  std::string trials_csv;
  std::string summary_csv;
};

/// One solve of a planted instance; shared by the phase and timing drivers.
inline trial_record run_planted_trial(const experiment_config& cfg,
                                      std::size_t trial_index,
                                      std::uint64_t trial_seed, std::size_t n,
                                      bool use_l21, bool pm1,
                                      matrix_choice matrix) {
  const std::size_t g = cfg.group_size();
  const auto model = group_model::consecutive(cfg.p, g);
  const std::uint32_t d = cfg.effective_degree(cfg.num_groups, g);

  auto beta_star = detail::plant_signal(model, cfg.k, pm1, derive_seed(trial_seed, 1));

  linear_operator op;
  if (matrix == matrix_choice::expander) {
    // Convention: the solve uses X/d, and y scales identically. The
    // minimizer is unchanged; the scaling keeps step sizes comparable with
    // the unit-column-norm Gaussian baseline.
    op = scaled(make_operator(construct_random(cfg.p, n, d, derive_seed(trial_seed, 2))),
                1.0 / static_cast<double>(d));
  } else {
    op = make_gaussian(n, cfg.p, derive_seed(trial_seed, 2), cfg.dense_budget_bytes);
  }
  std::vector<double> y = op.apply(beta_star);

  recovery_problem problem;
  problem.op = std::move(op);
  problem.y = std::move(y);
  if (use_l21) problem.model = model;
  problem.constraint = constraint_kind::equality;

  solver_config scfg = cfg.solver;
  scfg.max_seconds = cfg.wall_clock_cap_seconds;
  const auto report = solve(problem, scfg);

  trial_record rec;
  rec.trial = trial_index;
  rec.seed = trial_seed;
  rec.n = n;
  rec.p = cfg.p;
  rec.num_groups = cfg.num_groups;
  rec.group_size = g;
  rec.k = cfg.k;
  rec.method = std::string(use_l21 ? "l21" : "l1") + (pm1 ? "-pm1" : "-gauss");
  rec.matrix = matrix == matrix_choice::expander ? "expander" : "gaussian";
  rec.err_l2 = norm2_diff(report.beta_hat, beta_star);
  {
    std::vector<double> diff(beta_star.size());
    for (std::size_t i = 0; i < diff.size(); ++i)
      diff[i] = report.beta_hat[i] - beta_star[i];
    rec.err_l21 = l21_norm(model, diff);
  }
  rec.residual_l1 = report.primal_residual_l1;
  rec.time_ms = report.wall_seconds * 1000.0;
  rec.iters = report.iterations;
  rec.converged = report.converged;
  rec.success = rec.err_l2 <= success_error_threshold;
  return rec;
}

/// Success probability versus measurement count over planted random
/// instances; one row per (n, objective, signal, matrix, trial).
inline phase_result run_phase(const experiment_config& cfg) {
  const auto n_grid = cfg.resolve_n_grid();
  const auto axes = detail::resolve_axes(cfg);
  if (cfg.monte_carlo == 0)
    throw std::invalid_argument("run_phase: monte_carlo >= 1");

  struct descriptor {
    std::size_t n, trial;
    bool l21, pm1;
    matrix_choice matrix;
  };
  std::vector<descriptor> grid;
  for (std::size_t n : n_grid)
    for (matrix_choice m : axes.matrices)
      for (bool l21 : axes.objectives_l21)
        for (bool pm1 : axes.signals_pm1)
          for (std::size_t t = 0; t < cfg.monte_carlo; ++t)
            grid.push_back({n, t, l21, pm1, m});

  phase_result result;
  result.trials.resize(grid.size());
  parallel_for(grid.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
    const auto& d = grid[i];
    // The signal seed is shared across methods at the same (n, trial) so
    // every method sees the same planted instance.
    const std::uint64_t seed =
        derive_seed(cfg.master_seed, d.n * 1000 + d.trial, d.pm1 ? 1 : 0);
    result.trials[i] =
        run_planted_trial(cfg, d.trial, seed, d.n, d.l21, d.pm1, d.matrix);
  });

  std::string csv = trial_csv_header();
  csv += '\n';
  for (const auto& r : result.trials) csv += trial_csv_row(r, "phase") + '\n';
  result.trials_csv = std::move(csv);

  // Per grid point: success rate plus median error/time.
  std::string summary = "n,method,matrix,trials,success_rate,median_err_l2,median_time_ms,mean_iters\n";
  for (std::size_t n : n_grid)
    for (matrix_choice m : axes.matrices)
      for (bool l21 : axes.objectives_l21)
        for (bool pm1 : axes.signals_pm1) {
          const std::string method =
              std::string(l21 ? "l21" : "l1") + (pm1 ? "-pm1" : "-gauss");
          const std::string matrix = m == matrix_choice::expander ? "expander" : "gaussian";
          std::vector<double> errs, times;
          double iters = 0.0;
          std::size_t successes = 0, count = 0;
          for (const auto& r : result.trials) {
            if (r.n != n || r.method != method || r.matrix != matrix) continue;
            ++count;
            successes += r.success ? 1 : 0;
            errs.push_back(r.err_l2);
            times.push_back(r.time_ms);
            iters += static_cast<double>(r.iters);
          }
          if (count == 0) continue;
          summary += std::to_string(n) + ',' + method + ',' + matrix + ',' +
                     std::to_string(count) + ',' +
                     format_double(static_cast<double>(successes) /
                                   static_cast<double>(count)) +
                     ',' + format_double(detail::median(errs)) + ',' +
                     format_double(detail::median(times)) + ',' +
                     format_double(iters / static_cast<double>(count)) + '\n';
        }
  result.summary_csv = std::move(summary);
  return result;
}

struct timing_result {
  std::vector<trial_record> trials;
  std::string trials_csv;
  std::string summary_csv;
  nlohmann::json summary;  // per cell: median times and the speedup ratio
};

/// Expander versus dense-Gaussian wall time at matched configurations,
/// n = ceil(0.4 p), medians over Monte Carlo repeats.
inline timing_result run_timing(const experiment_config& cfg) {
  if (cfg.matrix != matrix_choice::both)
    throw std::invalid_argument("run_timing: matrix_kind must be both");
  timing_result result;

  struct cell { std::size_t p, kg; };
  std::vector<cell> cells;
  for (std::size_t p : cfg.timing_p_grid)
    for (std::size_t kg : cfg.timing_kg_grid) cells.push_back({p, kg});

  std::string csv = trial_csv_header();
  csv += '\n';
  result.summary = nlohmann::json::array();

  for (const auto& c : cells) {
    experiment_config local = cfg;
    local.p = c.p;
    const std::size_t g = 10;  // 10 columns per group at the benchmark scales
    local.num_groups = c.p / g;
    if (c.kg % g != 0)
      throw std::invalid_argument("run_timing: k*g grid entry not a multiple of g");
    local.k = c.kg / g;
    const std::size_t n =
        static_cast<std::size_t>(std::ceil(0.4 * static_cast<double>(c.p)));

    // Trials run sequentially so wall-time medians are not skewed by
    // core contention; the two matrix kinds see identical instances.
    std::vector<double> expander_times, gaussian_times;
    for (std::size_t t = 0; t < cfg.monte_carlo; ++t) {
      const std::uint64_t seed = derive_seed(cfg.master_seed, c.p * 131 + c.kg, t);
      for (matrix_choice m : {matrix_choice::expander, matrix_choice::gaussian}) {
        auto rec = run_planted_trial(local, t, seed, n, /*use_l21=*/true,
                                     /*pm1=*/false, m);
        (m == matrix_choice::expander ? expander_times : gaussian_times)
            .push_back(rec.time_ms);
        csv += trial_csv_row(rec, "timing") + '\n';
        result.trials.push_back(std::move(rec));
      }
    }
    const double med_exp = detail::median(expander_times);
    const double med_gau = detail::median(gaussian_times);
    result.summary.push_back({{"p", c.p},
                              {"kg", c.kg},
                              {"n", n},
                              {"median_expander_ms", med_exp},
                              {"median_gaussian_ms", med_gau},
                              {"speedup", med_exp > 0.0 ? med_gau / med_exp : 0.0}});
  }
  result.trials_csv = std::move(csv);

  std::string summary = "p,kg,n,median_expander_ms,median_gaussian_ms,speedup\n";
  for (const auto& row : result.summary)
    summary += std::to_string(row["p"].get<std::size_t>()) + ',' +
               std::to_string(row["kg"].get<std::size_t>()) + ',' +
               std::to_string(row["n"].get<std::size_t>()) + ',' +
               format_double(row["median_expander_ms"].get<double>()) + ',' +
               format_double(row["median_gaussian_ms"].get<double>()) + ',' +
               format_double(row["speedup"].get<double>()) + '\n';
  result.summary_csv = std::move(summary);
  return result;
}

}  // namespace blockbp

#include "blockbp/harness_cov.hpp"
#include "blockbp/harness_theory.hpp"
