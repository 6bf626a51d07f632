#pragma once

// Multi-step runs with per-step diagnostics, lambda sweeps towards the MBO
// limit, and time-step refinement studies.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "graph_phase/error.hpp"
#include "graph_phase/graph.hpp"
#include "graph_phase/two_class.hpp"

namespace graph_phase {

struct LogEntry {
  long step = 0;
  double mass = 0.0;
  double H = 0.0;
  double H_tau = 0.0;
  double GL = 0.0;
  double max_change = 0.0;
  double multiplier = 0.0;
};

enum class TerminationReason { MaxSteps, FixedPoint };

inline const char* to_string(TerminationReason r) {
  return r == TerminationReason::FixedPoint ? "fixed_point" : "max_steps";
}

struct Trajectory {
  std::vector<Field> states;       // possibly decimated
  std::vector<long> state_steps;   // step index of each stored state
  std::vector<LogEntry> log;       // one entry per step, including step 0
  SchemeParams params;
  TerminationReason terminated_reason = TerminationReason::MaxSteps;

  const Field& final_state() const { return states.back(); }
  long steps_taken() const { return log.empty() ? 0 : log.back().step; }
};

inline constexpr double kStorageBudget = 1e7;

struct TrajectoryOptions {
  long max_steps = 100;
  /// Stop once the sup-norm change is at most this; defaults to 0 for
  /// lambda = 1 and 1e-12 otherwise. Negative disables early stopping.
  std::optional<double> fixed_point_tol;
  /// Keep every state_stride-th state when |V| * steps exceeds the storage
  /// budget; 0 picks the smallest stride that fits.
  long state_stride = 0;
  double group_tol = kDefaultGroupTol;
  /// Called after every step with the step index (1-based) and its result.
  std::function<void(long, const StepResult&)> observer;
};

inline StepResult scheme_step(const Field& u, const Graph& g, const Spectrum& s,
                              const SchemeParams& p, double group_tol = kDefaultGroupTol) {
  return p.lambda >= 1.0 ? mbo_step(u, g, s, p.tau, group_tol) : sd_step(u, g, s, p, group_tol);
}

namespace detail {
inline LogEntry log_entry(long step, const Field& u, const Graph& g, const Spectrum& s,
                          const SchemeParams& p, double change, double multiplier) {
  const LyapunovValue h = lyapunov_H(u, p, s, g);
  return {step, mass(u, g), h.H, h.H_tau, ginzburg_landau(u, g, p.epsilon), change, multiplier};
}
}  // namespace detail

inline Trajectory run_trajectory(const Field& u0, const Graph& g, const Spectrum& s,
                                 const SchemeParams& p, const TrajectoryOptions& opt = {}) {
  detail::check_conforming(g, u0.size(), "u0");
  detail::check_unit_interval(u0, "u0");
  if (opt.max_steps < 0) throw Error(ErrorKind::InvalidParameter, "max_steps must be >= 0");
  const double tol = opt.fixed_point_tol.value_or(p.lambda >= 1.0 ? 0.0 : 1e-12);
  long stride = opt.state_stride;
  const double entries = static_cast<double>(g.num_vertices()) * static_cast<double>(opt.max_steps + 1);
  if (entries <= kStorageBudget) {
    stride = 1;
  } else if (stride <= 0) {
    stride = static_cast<long>(std::ceil(entries / kStorageBudget));
  }

  Trajectory traj;
  traj.params = p;
  traj.states.push_back(u0);
  traj.state_steps.push_back(0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  traj.log.push_back(detail::log_entry(0, u0, g, s, p, nan, nan));
  Field u = u0;
  for (long n = 1; n <= opt.max_steps; ++n) {
    StepResult step = scheme_step(u, g, s, p, opt.group_tol);
    const double change = sup_norm(step.u_next - u);
    u = step.u_next;
    traj.log.push_back(
        detail::log_entry(n, u, g, s, p, change, multiplier_value(step.multiplier)));
    if (opt.observer) opt.observer(n, step);
    const bool done = tol >= 0.0 && change <= tol;
    if (n % stride == 0 || done || n == opt.max_steps) {
      traj.states.push_back(u);
      traj.state_steps.push_back(n);
    }
    if (done) {
      traj.terminated_reason = TerminationReason::FixedPoint;
      break;
    }
  }
  return traj;
}

namespace detail {

/// Worker count from GRAPH_PHASE_THREADS (default 1).
inline int worker_count() {
  const char* env = std::getenv("GRAPH_PHASE_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

/// Runs fn(i) for i in [0, count), spreading work over up to worker_count()
/// threads. The first exception is rethrown after all workers join.
inline void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

struct SweepRow {
  double lambda = 0.0;
  double sup_distance_to_mbo = 0.0;
  double nu = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // in the order the lambdas were given
  Field mbo_output;
  /// Smallest listed lambda from which every larger listed lambda reproduces
  /// the MBO output to within stabilization_tol; NaN if the largest does not.
  double stabilization_lambda = std::numeric_limits<double>::quiet_NaN();
  double stabilization_tol = 1e-12;
};

/// One semi-discrete step per lambda (at fixed tau) from the same u0,
/// compared with the MBO step from u0.
inline SweepResult sweep_lambda(const Field& u0, const Graph& g, const Spectrum& s, double tau,
                                const std::vector<double>& lambdas,
                                double group_tol = kDefaultGroupTol) {
  for (double lam : lambdas) {
    if (!(lam > 0.0 && lam < 1.0)) {
      throw Error(ErrorKind::InvalidParameter, "sweep lambdas must lie in (0, 1)");
    }
  }
  SweepResult res;
  res.mbo_output = mbo_step(u0, g, s, tau, group_tol).u_next;
  res.rows.resize(lambdas.size());
  detail::parallel_for(static_cast<int>(lambdas.size()), [&](int i) {
    const SchemeParams p = SchemeParams::from_lambda(tau, lambdas[i]);
    const StepResult step = sd_step(u0, g, s, p, group_tol);
    res.rows[i] = {lambdas[i], sup_norm(step.u_next - res.mbo_output),
                   multiplier_value(step.multiplier)};
  });
  std::vector<SweepRow> sorted = res.rows;
  std::sort(sorted.begin(), sorted.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.lambda < b.lambda; });
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    if (it->sup_distance_to_mbo > res.stabilization_tol) break;
    res.stabilization_lambda = it->lambda;
  }
  return res;
}

struct RefinementLevel {
  double tau = 0.0;
  long steps = 0;
  double h_tau_gl_gap = 0.0;    // |H_tau - GL| at the final state
  double h_tau_gl_bound = 0.0;  // (tau / 2) |<u, Q_tau u>| at the final state
};

struct ConvergenceReport {
  std::vector<RefinementLevel> levels;
  std::vector<double> sample_times;
  /// distances[j][m]: sup-norm distance between levels j and j + 1 at sample_times[m]
  std::vector<std::vector<double>> distances;
  std::vector<double> max_distances;  // per consecutive pair
  std::vector<double> ratios;         // max_distances[j] / max_distances[j + 1]
  /// min over sampled s < t on the finest run of
  /// GL(u(s)) - GL(u(t)) - |u(s) - u(t)|^2 / (2 (t - s))
  double gl_step_min_slack = 0.0;
  double lipschitz_max_quotient = 0.0;
  double lipschitz_bound = 0.0;
  /// The bound's derivation uses |exp(h(1/eps - Delta)) - I| = exp(h/eps) - 1,
  /// which holds when the largest Laplacian eigenvalue is at most 2 / eps.
  bool lipschitz_bound_applicable = false;
  /// max over sampled pairs of |u(s) - u(t)| - sqrt(2 GL(u0)) sqrt(|t - s|)
  double holder_max_excess = 0.0;
};

struct ConvergenceOptions {
  int sample_count = 20;
  double group_tol = kDefaultGroupTol;
};

/// Index of the state representing time t for step tau: ceil(t / tau).
inline long matched_index(double t, double tau) {
  return static_cast<long>(std::ceil(t / tau - 1e-9));
}

inline ConvergenceReport converge_tau(const Field& u0, const Graph& g, const Spectrum& s,
                                      double epsilon, double t_final,
                                      const std::vector<double>& taus,
                                      const ConvergenceOptions& opt = {}) {
  if (!(t_final > 0.0)) throw Error(ErrorKind::InvalidParameter, "t_final must be positive");
  if (taus.empty()) throw Error(ErrorKind::InvalidParameter, "need at least one tau");
  for (std::size_t j = 0; j < taus.size(); ++j) {
    if (!(taus[j] > 0.0)) throw Error(ErrorKind::InvalidParameter, "tau must be positive");
    if (taus[j] > epsilon) {
      throw Error(ErrorKind::TauExceedsEpsilon,
                  "tau " + std::to_string(taus[j]) + " exceeds epsilon " + std::to_string(epsilon));
    }
    if (j > 0 && !(taus[j] < taus[j - 1])) {
      throw Error(ErrorKind::InvalidParameter, "taus must be strictly decreasing");
    }
  }
  detail::check_unit_interval(u0, "u0");
  if (opt.sample_count < 1) throw Error(ErrorKind::InvalidParameter, "sample_count must be >= 1");

  const int L = static_cast<int>(taus.size());
  std::vector<std::vector<Field>> runs(static_cast<std::size_t>(L));
  ConvergenceReport rep;
  rep.levels.resize(static_cast<std::size_t>(L));
  detail::parallel_for(L, [&](int j) {
    const SchemeParams p = SchemeParams::make(epsilon, taus[j]);
    const long steps = matched_index(t_final, taus[j]);
    auto& states = runs[j];
    states.reserve(static_cast<std::size_t>(steps) + 1);
    states.push_back(u0);
    for (long n = 0; n < steps; ++n) {
      states.push_back(scheme_step(states.back(), g, s, p, opt.group_tol).u_next);
    }
    const Field& u = states.back();
    const double h_tau = lyapunov_H(u, p, s, g).H_tau;
    const double gl = ginzburg_landau(u, g, epsilon);
    const double tau = taus[j];
    const Field qu = s.apply_function(u, [tau](double mu) {
      return (std::exp(-tau * mu) - 1.0 + tau * mu) / (tau * tau);
    });
    rep.levels[j] = {tau, steps, std::abs(h_tau - gl), 0.5 * tau * std::abs(inner_product(u, qu, g))};
  });

  for (int m = 0; m <= opt.sample_count; ++m) {
    rep.sample_times.push_back(t_final * m / opt.sample_count);
  }
  auto state_at = [&](int j, double t) -> const Field& {
    const long idx = std::min<long>(matched_index(t, taus[j]), static_cast<long>(runs[j].size()) - 1);
    return runs[j][static_cast<std::size_t>(idx)];
  };
  for (int j = 0; j + 1 < L; ++j) {
    std::vector<double> row;
    for (double t : rep.sample_times) row.push_back(sup_norm(state_at(j, t) - state_at(j + 1, t)));
    rep.max_distances.push_back(*std::max_element(row.begin(), row.end()));
    rep.distances.push_back(std::move(row));
  }
  for (std::size_t j = 0; j + 1 < rep.max_distances.size(); ++j) {
    rep.ratios.push_back(rep.max_distances[j] / rep.max_distances[j + 1]);
  }

  const int fine = L - 1;
  const double tau_fine = taus[fine];
  const std::vector<Field>& finest = runs[fine];
  std::vector<double> gl;
  for (double t : rep.sample_times) gl.push_back(ginzburg_landau(state_at(fine, t), g, epsilon));
  const double gl0 = ginzburg_landau(u0, g, epsilon);
  rep.gl_step_min_slack = std::numeric_limits<double>::infinity();
  rep.holder_max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < rep.sample_times.size(); ++a) {
    for (std::size_t b = a + 1; b < rep.sample_times.size(); ++b) {
      const double dt = rep.sample_times[b] - rep.sample_times[a];
      const double dist = norm(state_at(fine, rep.sample_times[a]) - state_at(fine, rep.sample_times[b]), g);
      rep.gl_step_min_slack = std::min(rep.gl_step_min_slack, gl[a] - gl[b] - dist * dist / (2.0 * dt));
      rep.holder_max_excess =
          std::max(rep.holder_max_excess, dist - std::sqrt(2.0 * gl0) * std::sqrt(dt));
      rep.lipschitz_max_quotient = std::max(rep.lipschitz_max_quotient, dist / dt);
    }
  }
  for (std::size_t n = 0; n + 1 < finest.size(); ++n) {
    rep.lipschitz_max_quotient =
        std::max(rep.lipschitz_max_quotient, norm(finest[n + 1] - finest[n], g) / tau_fine);
  }
  const double ubar = average(u0, g);
  const double rho = std::max(ubar, 1.0 - ubar);
  const double one_norm = std::sqrt(g.total_mass());
  const double e = std::exp(1.0 / epsilon);
  rep.lipschitz_bound = std::max(rho * one_norm * (e - 1.0 + e / epsilon), one_norm);
  rep.lipschitz_bound_applicable = s.max_eigenvalue() <= 2.0 / epsilon;
  return rep;
}

}  // namespace graph_phase
