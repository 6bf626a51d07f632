#pragma once

// Command-line driver: run, sweep-lambda, converge-tau, oracle-check,
// multiclass. Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "graph_phase/error.hpp"
#include "graph_phase/graph.hpp"
#include "graph_phase/io.hpp"
#include "graph_phase/multi_class.hpp"
#include "graph_phase/oracles.hpp"
#include "graph_phase/random_instances.hpp"
#include "graph_phase/trajectory.hpp"
#include "graph_phase/two_class.hpp"

namespace graph_phase {

struct RunConfig {
  std::string graph_path;
  std::string init_path;
  double epsilon = 1.0;
  double tau = 0.1;
  std::vector<double> lambdas;
  std::vector<double> taus;
  double t_final = 1.0;
  long steps = 100;
  std::string mode;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int classes = 2;
  int instances = 100;
  double group_tol = kDefaultGroupTol;
  double fp_tol = 1e-10;
  int max_iter = 500;
};

namespace detail {

inline void print_error(std::ostream& err, const std::string& kind, const std::string& message,
                        int code) {
  nlohmann::json line{{"error", kind}, {"message", message}, {"exit_code", code}};
  err << line.dump() << '\n';
}

inline nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

inline int cmd_run(const RunConfig& cfg, std::ostream& out) {
  const Graph g = parse_graph_file(cfg.graph_path);
  const Field u0 = parse_field_file(cfg.init_path, g);
  const Spectrum s = spectral_decompose(g);
  SchemeParams p;
  if (cfg.mode == "mbo") {
    p = SchemeParams::from_lambda(cfg.tau, 1.0);
  } else {
    p = SchemeParams::make(cfg.epsilon, cfg.tau);
    if (cfg.mode == "sd" && p.lambda >= 1.0) {
      throw Error(ErrorKind::InvalidParameter, "mode sd needs tau < eps");
    }
  }
  TrajectoryOptions opt;
  opt.max_steps = cfg.steps;
  opt.group_tol = cfg.group_tol;
  const Trajectory traj = run_trajectory(u0, g, s, p, opt);
  write_trajectory_outputs(traj, cfg.output_dir);
  nlohmann::json params{{"epsilon", finite_or_null(p.epsilon)},
                        {"tau", p.tau},
                        {"lambda", p.lambda},
                        {"r", g.r()},
                        {"steps", cfg.steps}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : traj.log) {
    rows.push_back({{"step", e.step},
                    {"mass", e.mass},
                    {"H", e.H},
                    {"H_tau", e.H_tau},
                    {"GL", finite_or_null(e.GL)},
                    {"max_change", finite_or_null(e.max_change)},
                    {"multiplier", finite_or_null(e.multiplier)}});
  }
  write_report(cfg.output_dir, p.lambda >= 1.0 ? "mbo" : "sd", params, rows,
               {{"terminated_reason", to_string(traj.terminated_reason)}});
  out << "run: " << traj.steps_taken() << " steps, " << to_string(traj.terminated_reason) << '\n';
  return 0;
}

inline std::vector<double> default_lambdas() {
  std::vector<double> out;
  for (int j = 1; j <= 40; ++j) out.push_back(1.0 - std::ldexp(1.0, -j));
  return out;
}

inline int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  const Graph g = parse_graph_file(cfg.graph_path);
  const Field u0 = parse_field_file(cfg.init_path, g);
  const Spectrum s = spectral_decompose(g);
  const auto lambdas = cfg.lambdas.empty() ? default_lambdas() : cfg.lambdas;
  const SweepResult res = sweep_lambda(u0, g, s, cfg.tau, lambdas, cfg.group_tol);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : res.rows) {
    rows.push_back({{"lambda", row.lambda},
                    {"sup_distance_to_mbo", row.sup_distance_to_mbo},
                    {"nu", row.nu}});
  }
  std::vector<double> mbo(res.mbo_output.data(), res.mbo_output.data() + res.mbo_output.size());
  write_report(cfg.output_dir, "sweep-lambda", {{"tau", cfg.tau}, {"r", g.r()}}, rows,
               {{"stabilization_lambda", finite_or_null(res.stabilization_lambda)},
                {"mbo_output", mbo}});
  out << "sweep-lambda: " << res.rows.size() << " lambdas, stabilization at "
      << format_double(res.stabilization_lambda) << '\n';
  return 0;
}

inline int cmd_converge(const RunConfig& cfg, std::ostream& out) {
  const Graph g = parse_graph_file(cfg.graph_path);
  const Field u0 = parse_field_file(cfg.init_path, g);
  const Spectrum s = spectral_decompose(g);
  std::vector<double> taus = cfg.taus;
  if (taus.empty()) {
    for (int j = 0; j < 4; ++j) taus.push_back(std::ldexp(1e-2, -j));
  }
  const ConvergenceReport rep = converge_tau(u0, g, s, cfg.epsilon, cfg.t_final, taus);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t j = 0; j < rep.levels.size(); ++j) {
    nlohmann::json row{{"tau", rep.levels[j].tau},
                       {"steps", rep.levels[j].steps},
                       {"h_tau_gl_gap", rep.levels[j].h_tau_gl_gap},
                       {"h_tau_gl_bound", rep.levels[j].h_tau_gl_bound}};
    if (j < rep.distances.size()) {
      row["matched_distances"] = rep.distances[j];
      row["max_distance"] = rep.max_distances[j];
    }
    if (j < rep.ratios.size()) row["ratio"] = finite_or_null(rep.ratios[j]);
    rows.push_back(row);
  }
  nlohmann::json extra{{"sample_times", rep.sample_times},
                       {"distance_matrix", rep.distances},
                       {"gl_step_min_slack", rep.gl_step_min_slack},
                       {"lipschitz_max_quotient", rep.lipschitz_max_quotient},
                       {"lipschitz_bound", rep.lipschitz_bound},
                       {"lipschitz_bound_applicable", rep.lipschitz_bound_applicable},
                       {"holder_max_excess", rep.holder_max_excess}};
  write_report(cfg.output_dir, "converge-tau",
               {{"epsilon", cfg.epsilon}, {"t_final", cfg.t_final}, {"taus", taus}, {"r", g.r()}},
               rows, extra);
  out << "converge-tau: " << taus.size() << " levels\n";
  return 0;
}

struct OracleTally {
  int sd_instances = 0;
  int sd_passed = 0;
  int mbo_instances = 0;
  int mbo_passed = 0;
  double worst_sd_distance = 0.0;
  double worst_mbo_gap = 0.0;
};

/// Random suite: lambda < 1 steps against projected gradient descent and
/// lambda = 1 steps against extreme-point enumeration.
inline OracleTally oracle_suite(std::uint64_t seed, int instances) {
  Rng rng(seed);
  OracleTally tally;
  for (int k = 0; k < instances; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 6)(rng);
    const double r = std::uniform_int_distribution<int>(0, 2)(rng) * 0.5;
    const Graph g = random_graph(rng, n, 0.4, r);
    const Spectrum s = spectral_decompose(g);
    const Field u = random_field(rng, n);
    const double lambda = std::uniform_int_distribution<int>(1, 9)(rng) / 10.0;
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const SchemeParams p = SchemeParams::from_lambda(tau, lambda);
    const Field closed = sd_step(u, g, s, p).u_next;
    const Field oracle = variational_oracle(u, g, s, p);
    const double dist = sup_norm(closed - oracle);
    tally.worst_sd_distance = std::max(tally.worst_sd_distance, dist);
    ++tally.sd_instances;
    if (dist <= 1e-6) ++tally.sd_passed;
  }
  for (int k = 0; k < instances; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 8)(rng);
    const double r = std::uniform_int_distribution<int>(0, 2)(rng) * 0.5;
    const Graph g = random_graph(rng, n, 0.4, r);
    const Spectrum s = spectral_decompose(g);
    const Field u = random_field(rng, n);
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const StepResult step = mbo_step(u, g, s, tau);
    const MboOracleResult best = mbo_oracle(u, g, s, tau);
    const double gap = std::abs(inner_product(step.u_next, step.diffused, g) - best.max_value);
    tally.worst_mbo_gap = std::max(tally.worst_mbo_gap, gap);
    ++tally.mbo_instances;
    if (gap <= 1e-10) ++tally.mbo_passed;
  }
  return tally;
}

inline int cmd_oracle(const RunConfig& cfg, std::ostream& out, bool write) {
  if (cfg.instances < 1) throw Error(ErrorKind::InvalidParameter, "instances must be >= 1");
  const OracleTally t = oracle_suite(cfg.seed, cfg.instances);
  const int passed = t.sd_passed + t.mbo_passed;
  const int total = t.sd_instances + t.mbo_instances;
  if (write) {
    nlohmann::json rows = nlohmann::json::array();
    rows.push_back({{"suite", "sd_vs_variational"},
                    {"instances", t.sd_instances},
                    {"passed", t.sd_passed},
                    {"worst", t.worst_sd_distance}});
    rows.push_back({{"suite", "mbo_vs_extreme_points"},
                    {"instances", t.mbo_instances},
                    {"passed", t.mbo_passed},
                    {"worst", t.worst_mbo_gap}});
    write_report(cfg.output_dir, "oracle-check",
                 {{"seed", cfg.seed}, {"instances", cfg.instances}}, rows);
  }
  out << "oracle-check: " << passed << "/" << total << " passed\n";
  if (passed != total) {
    throw Error(ErrorKind::NoConvergence, "closed form disagrees with oracle on " +
                                              std::to_string(total - passed) + " instance(s)");
  }
  return 0;
}

inline int cmd_multiclass(const RunConfig& cfg, std::ostream& out) {
  const Graph g = parse_graph_file(cfg.graph_path);
  const SimplexField U0 = parse_simplex_field_file(cfg.init_path, g, cfg.classes);
  const Spectrum s = spectral_decompose(g);
  const SchemeParams p = SchemeParams::make(cfg.epsilon, cfg.tau);
  const bool conserving = cfg.mode.empty() || cfg.mode == "multiclass-msd";
  if (!conserving && cfg.mode != "multiclass-sd") {
    throw Error(ErrorKind::InvalidParameter, "multiclass mode must be multiclass-sd or multiclass-msd");
  }
  if (cfg.steps < 0) throw Error(ErrorKind::InvalidParameter, "steps must be >= 0");
  FixedPointOptions opt{cfg.max_iter, cfg.fp_tol};
  SimplexField U = U0;
  nlohmann::json rows = nlohmann::json::array();
  auto row_for = [&](long step, const SimplexField& V, const McStepResult* res, double change) {
    const Eigen::VectorXd m = class_masses(V, g);
    const MultiObstacleEnergy e = multi_obstacle_energy(V, g, p.epsilon);
    nlohmann::json row{{"step", step},
                       {"class_masses", std::vector<double>(m.data(), m.data() + m.size())},
                       {"W", finite_or_null(e.W)},
                       {"GL", finite_or_null(e.GL)},
                       {"max_change", finite_or_null(change)}};
    if (res) {
      row["residual"] = res->residual;
      row["iterations"] = res->iterations;
      row["converged"] = res->converged;
    }
    return row;
  };
  rows.push_back(row_for(0, U, nullptr, std::nan("")));
  int unconverged = 0;
  for (long n = 1; n <= cfg.steps; ++n) {
    McStepResult res = conserving ? mc_msd_step(U, g, s, p, opt) : mc_sd_step(U, g, s, p, opt);
    if (!res.converged) ++unconverged;
    const double change = (res.U_next - U).cwiseAbs().maxCoeff();
    U = res.U_next;
    rows.push_back(row_for(n, U, &res, change));
  }
  const auto root = ensure_directory(cfg.output_dir);
  write_file(root / "final_state.txt", [&](std::ostream& o) { write_rows(o, U); });
  write_report(cfg.output_dir, conserving ? "multiclass-msd" : "multiclass-sd",
               {{"epsilon", p.epsilon},
                {"tau", p.tau},
                {"lambda", p.lambda},
                {"classes", cfg.classes},
                {"fp_tol", cfg.fp_tol},
                {"max_iter", cfg.max_iter},
                {"steps", cfg.steps}},
               rows);
  out << "multiclass: " << cfg.steps << " steps, " << unconverged << " unconverged\n";
  if (unconverged > 0) {
    throw Error(ErrorKind::NoConvergence,
                std::to_string(unconverged) + " step(s) did not reach the fixed-point tolerance");
  }
  return 0;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Mass-conserving Allen-Cahn and MBO schemes on weighted graphs"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub, bool needs_init) {
    sub->add_option("--graph", cfg.graph_path, "graph file")->required();
    auto* init = sub->add_option("--init", cfg.init_path, "initial field file");
    if (needs_init) init->required();
    sub->add_option("--out", cfg.output_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--group-tol", cfg.group_tol, "tie tolerance for threshold levels");
  };

  auto* run = app.add_subcommand("run", "iterate the two-class scheme");
  add_common(run, true);
  run->add_option("--eps", cfg.epsilon, "interface scale epsilon");
  run->add_option("--tau", cfg.tau, "time step")->required();
  run->add_option("--steps", cfg.steps, "maximum number of steps");
  run->add_option("--mode", cfg.mode, "sd or mbo")->check(CLI::IsMember({"sd", "mbo"}));

  auto* sweep = app.add_subcommand("sweep-lambda", "one step per lambda compared with MBO");
  add_common(sweep, true);
  sweep->add_option("--tau", cfg.tau, "time step")->required();
  sweep->add_option("--lambdas", cfg.lambdas, "lambda values in (0, 1)")->delimiter(',');

  auto* conv = app.add_subcommand("converge-tau", "time-step refinement study");
  add_common(conv, true);
  conv->add_option("--eps", cfg.epsilon, "interface scale epsilon");
  conv->add_option("--t-final", cfg.t_final, "final time");
  conv->add_option("--taus", cfg.taus, "decreasing time steps")->delimiter(',');

  auto* oracle = app.add_subcommand("oracle-check", "closed forms against brute-force oracles");
  oracle->add_option("--seed", cfg.seed, "random seed");
  oracle->add_option("--instances", cfg.instances, "instances per suite");
  auto* oracle_out = oracle->add_option("--out", cfg.output_dir, "output directory");

  auto* multi = app.add_subcommand("multiclass", "multi-class semi-discrete scheme");
  add_common(multi, true);
  multi->add_option("--classes", cfg.classes, "number of classes K")->required();
  multi->add_option("--eps", cfg.epsilon, "interface scale epsilon");
  multi->add_option("--tau", cfg.tau, "time step")->required();
  multi->add_option("--steps", cfg.steps, "number of steps");
  multi->add_option("--mode", cfg.mode, "multiclass-sd or multiclass-msd")
      ->check(CLI::IsMember({"multiclass-sd", "multiclass-msd"}));
  multi->add_option("--fp-tol", cfg.fp_tol, "fixed-point tolerance");
  multi->add_option("--max-iter", cfg.max_iter, "fixed-point iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failing->help();
    detail::print_error(err, "UsageError", e.what(), 1);
    return 1;
  }

  try {
    if (run->parsed()) return detail::cmd_run(cfg, out);
    if (sweep->parsed()) return detail::cmd_sweep(cfg, out);
    if (conv->parsed()) return detail::cmd_converge(cfg, out);
    if (oracle->parsed()) return detail::cmd_oracle(cfg, out, oracle_out->count() > 0);
    if (multi->parsed()) return detail::cmd_multiclass(cfg, out);
  } catch (const Error& e) {
    const int code = is_numerical(e.kind()) ? 2 : 1;
    detail::print_error(err, std::string(to_string(e.kind())), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    detail::print_error(err, "InternalError", e.what(), 2);
    return 2;
  }
  return 1;
}

}  // namespace graph_phase
