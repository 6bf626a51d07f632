#pragma once

// Multi-class states (rows on the probability simplex), the multi-obstacle
// potential and its well force, and fixed-point solvers for the implicit
// multi-class semi-discrete schemes with and without per-class mass
// conservation. The solvers are experimental: every result carries its
// residual and a converged flag.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "graph_phase/error.hpp"
#include "graph_phase/graph.hpp"
#include "graph_phase/two_class.hpp"

namespace graph_phase {

/// |V| x K matrix whose rows are class weights of each vertex.
using SimplexField = Eigen::MatrixXd;

inline constexpr double kRowSumTol = 1e-10;

namespace detail {

inline bool row_in_pi(const Eigen::MatrixXd& U, Eigen::Index i) {
  return std::abs(U.row(i).sum() - 1.0) <= kRowSumTol;
}

inline bool row_in_sigma(const Eigen::MatrixXd& U, Eigen::Index i) {
  return row_in_pi(U, i) && U.row(i).minCoeff() >= -1e-12;
}

inline void check_simplex_field(const SimplexField& U, const Graph& g, const char* what) {
  check_conforming(g, U.rows(), what);
  if (U.cols() < 2) throw Error(ErrorKind::InvalidParameter, "need at least 2 classes");
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    if (!row_in_sigma(U, i)) {
      throw Error(ErrorKind::DomainViolation,
                  std::string(what) + " row " + std::to_string(i) + " is not on the simplex");
    }
  }
}

}  // namespace detail

/// Class masses M_k = sum_i d_i^r U_ik.
inline Eigen::VectorXd class_masses(const SimplexField& U, const Graph& g) {
  detail::check_conforming(g, U.rows(), "U");
  return U.transpose() * g.degree_powers();
}

struct MultiObstacleEnergy {
  double W = 0.0;   // sum_i d_i^r prod_k (1 - U_ik), +inf off the simplex
  double GL = 0.0;  // sum_k dirichlet(U^k) + W / epsilon
};

inline MultiObstacleEnergy multi_obstacle_energy(const SimplexField& U, const Graph& g,
                                                 double epsilon) {
  detail::check_conforming(g, U.rows(), "U");
  const double inf = std::numeric_limits<double>::infinity();
  MultiObstacleEnergy e;
  const auto& dr = g.degree_powers();
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    if (!detail::row_in_sigma(U, i)) return {inf, inf};
    double prod = 1.0;
    for (Eigen::Index k = 0; k < U.cols(); ++k) prod *= 1.0 - U(i, k);
    e.W += dr[i] * prod;
  }
  double dirichlet = 0.0;
  for (Eigen::Index k = 0; k < U.cols(); ++k) dirichlet += dirichlet_energy(U.col(k), g);
  e.GL = dirichlet + (std::isinf(epsilon) ? 0.0 : e.W / epsilon);
  return e;
}

/// f_ik = prod_{l != k}(1 - U_il) - (1/K) sum_q prod_{l != q}(1 - U_il).
inline Eigen::MatrixXd well_force_f(const SimplexField& U, const Graph& g) {
  detail::check_conforming(g, U.rows(), "U");
  const Eigen::Index K = U.cols();
  Eigen::MatrixXd f(U.rows(), K);
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    if (!detail::row_in_pi(U, i)) {
      throw Error(ErrorKind::RowNotInPi, "row " + std::to_string(i) + " sums to " +
                                             std::to_string(U.row(i).sum()));
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      double prod = 1.0;
      for (Eigen::Index l = 0; l < K; ++l) {
        if (l != k) prod *= 1.0 - U(i, l);
      }
      f(i, k) = prod;
    }
    f.row(i).array() -= f.row(i).mean();
  }
  return f;
}

/// Euclidean projection of a vector onto the probability simplex.
inline Eigen::RowVectorXd project_to_simplex(const Eigen::RowVectorXd& y) {
  const Eigen::Index K = y.size();
  std::vector<double> sorted(y.data(), y.data() + K);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (Eigen::Index j = 0; j < K; ++j) {
    cumulative += sorted[j];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) shift = candidate;
  }
  return (y.array() - shift).max(0.0).matrix();
}

inline SimplexField project_rows_to_simplex(const Eigen::MatrixXd& Y) {
  SimplexField out(Y.rows(), Y.cols());
  for (Eigen::Index i = 0; i < Y.rows(); ++i) out.row(i) = project_to_simplex(Y.row(i));
  return out;
}

struct TransportProjection {
  SimplexField X;
  Eigen::VectorXd shifts;  // rows of X are P_simplex(Y_i - shifts), shifts sum to 0
  int iterations = 0;
  bool converged = false;
};

/// Projection (in the r-weighted norm) onto matrices with simplex rows and
/// prescribed class masses, by dual ascent on the per-class shifts.
inline TransportProjection project_to_transportation(const Eigen::MatrixXd& Y,
                                                     const Eigen::VectorXd& masses, const Graph& g,
                                                     Eigen::VectorXd shifts = {},
                                                     int max_iter = 10000, double tol = 1e-12) {
  detail::check_conforming(g, Y.rows(), "Y");
  const Eigen::Index K = Y.cols();
  if (masses.size() != K) throw Error(ErrorKind::DimensionMismatch, "one mass per class needed");
  const double total = g.total_mass();
  const double mtol = 1e-10 * (1.0 + total);
  if (std::abs(masses.sum() - total) > mtol || masses.minCoeff() < -mtol ||
      masses.maxCoeff() > total + mtol) {
    throw Error(ErrorKind::InfeasibleMasses, "class masses must be in [0, mass(1)] and sum to it");
  }
  TransportProjection res;
  res.shifts = shifts.size() == K ? shifts : Eigen::VectorXd::Zero(K);
  const double stop = tol * (1.0 + total);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd shifted = Y.rowwise() - res.shifts.transpose();
    res.X = project_rows_to_simplex(shifted);
    const Eigen::VectorXd excess = res.X.transpose() * g.degree_powers() - masses;
    res.iterations = it + 1;
    if (excess.cwiseAbs().maxCoeff() <= stop) {
      res.converged = true;
      break;
    }
    res.shifts += excess / total;
    res.shifts.array() -= res.shifts.mean();
  }
  return res;
}

struct McStepResult {
  SimplexField U_next;
  Eigen::MatrixXd beta_tilde;
  Eigen::VectorXd class_constants;  // per-class constant avg(f^k + beta_tilde^k), mass-conserving only
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd class_masses_in;
  Eigen::VectorXd class_masses_out;
};

struct FixedPointOptions {
  int max_iter = 500;
  double fp_tol = 1e-10;
};

namespace detail {

template <class Project>
McStepResult mc_fixed_point(const SimplexField& U_n, const Graph& g, const Spectrum& s,
                            const SchemeParams& p, const FixedPointOptions& opt,
                            Project&& project) {
  check_simplex_field(U_n, g, "U_n");
  if (!(p.lambda >= 0.0 && p.lambda <= 1.0)) {
    throw Error(ErrorKind::InvalidParameter, "lambda must lie in [0, 1]");
  }
  McStepResult res;
  res.class_masses_in = class_masses(U_n, g);
  const Eigen::MatrixXd diffused = s.diffuse_columns(U_n, p.tau);
  auto target = [&](const SimplexField& U) -> Eigen::MatrixXd {
    return diffused + p.lambda * well_force_f(U, g);
  };

  SimplexField U = U_n;
  double omega = 1.0;
  double prev_change = std::numeric_limits<double>::infinity();
  int increases = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    const SimplexField P = project(target(U));
    const double change = (P - U).cwiseAbs().maxCoeff();
    U = (1.0 - omega) * U + omega * P;
    res.iterations = it + 1;
    const double moved = omega * change;
    if (moved <= opt.fp_tol) {
      res.converged = true;
      break;
    }
    increases = change > prev_change ? increases + 1 : 0;
    if (increases >= 2 && omega > 0.5) {
      omega = 0.5;
      increases = 0;
    }
    prev_change = change;
  }
  res.U_next = U;
  const Eigen::MatrixXd Y = target(U);
  const SimplexField P = project(Y);
  res.residual = (U - P).cwiseAbs().maxCoeff();
  if (p.lambda > 0.0) {
    res.beta_tilde = (P - Y) / p.lambda;
  } else {
    res.beta_tilde = Eigen::MatrixXd::Zero(U.rows(), U.cols());
  }
  res.class_masses_out = class_masses(U, g);
  return res;
}

}  // namespace detail

/// U_{n+1} = e^{-tau Delta} U_n + lambda f(U_{n+1}) + lambda beta_tilde,
/// solved by relaxed fixed-point iteration with row-simplex projection.
inline McStepResult mc_sd_step(const SimplexField& U_n, const Graph& g, const Spectrum& s,
                               const SchemeParams& p, const FixedPointOptions& opt = {}) {
  McStepResult res = detail::mc_fixed_point(
      U_n, g, s, p, opt, [](const Eigen::MatrixXd& Y) { return project_rows_to_simplex(Y); });
  for (Eigen::Index i = 0; i < res.beta_tilde.rows(); ++i) {
    res.beta_tilde.row(i).array() -= res.beta_tilde.row(i).mean();
  }
  return res;
}

/// Mass-conserving variant: the projection is onto simplex rows with the
/// class masses of U_n; the per-class shifts give the constants
/// avg(f^k + beta_tilde^k).
inline McStepResult mc_msd_step(const SimplexField& U_n, const Graph& g, const Spectrum& s,
                                const SchemeParams& p, const FixedPointOptions& opt = {}) {
  detail::check_simplex_field(U_n, g, "U_n");
  const Eigen::VectorXd masses = class_masses(U_n, g);
  Eigen::VectorXd shifts = Eigen::VectorXd::Zero(U_n.cols());
  bool inner_ok = true;
  auto project = [&](const Eigen::MatrixXd& Y) {
    TransportProjection tp = project_to_transportation(Y, masses, g, shifts);
    shifts = tp.shifts;
    inner_ok = tp.converged;
    return tp.X;
  };
  McStepResult res = detail::mc_fixed_point(U_n, g, s, p, opt, project);
  // P - Y = lambda beta_tilde - shifts, and beta_tilde has zero row sums
  res.beta_tilde.rowwise() += shifts.transpose() / (p.lambda > 0.0 ? p.lambda : 1.0);
  if (p.lambda == 0.0) res.beta_tilde.setZero();
  res.class_constants = p.lambda > 0.0 ? Eigen::VectorXd(shifts / p.lambda)
                                       : Eigen::VectorXd::Zero(U_n.cols());
  res.converged = res.converged && inner_ok;
  return res;
}

}  // namespace graph_phase
