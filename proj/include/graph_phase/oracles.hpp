#pragma once

// Brute-force and first-principles solvers used to certify the closed-form
// steps: extreme-point enumeration of the lambda = 1 feasible polytope,
// projected gradient descent for lambda < 1, and a small-step reference flow.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "graph_phase/error.hpp"
#include "graph_phase/graph.hpp"
#include "graph_phase/two_class.hpp"

namespace graph_phase {

inline constexpr int kMaxEnumerationVertices = 12;

/// Feasible state that is binary except at most one vertex.
struct ExtremePoint {
  Field values;
  int fractional_vertex = -1;
  double fractional_value = 1.0;
};

/// All extreme points of {u in [0,1]^V : mass(u) = M}. A fractional value of
/// exactly 1 coincides with a binary point and is listed once, as binary.
inline std::vector<ExtremePoint> enumerate_extreme_points(const Graph& g, double M) {
  const int n = g.num_vertices();
  if (n > kMaxEnumerationVertices) {
    throw Error(ErrorKind::GraphTooLarge, std::to_string(n) + " vertices exceed the limit of " +
                                              std::to_string(kMaxEnumerationVertices));
  }
  const double total = g.total_mass();
  const double tol = 1e-12 * (1.0 + total);
  if (!(M >= -tol && M <= total + tol)) {
    throw Error(ErrorKind::MassOutOfRange, "target mass outside [0, mass(1)]");
  }
  const auto& dr = g.degree_powers();
  std::vector<ExtremePoint> out;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) m += dr[i];
    }
    auto binary = [&]() {
      Field x = Field::Zero(n);
      for (int i = 0; i < n; ++i) {
        if (mask & (1u << i)) x[i] = 1.0;
      }
      return x;
    };
    if (std::abs(m - M) <= tol) out.push_back({binary(), -1, 1.0});
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) continue;
      const double deficit = M - m;
      if (deficit > tol && deficit < dr[i] - tol) {
        ExtremePoint p{binary(), i, deficit / dr[i]};
        p.values[i] = p.fractional_value;
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

struct MboOracleResult {
  double max_value = 0.0;
  std::vector<ExtremePoint> argmax;
};

/// Maximizes <x, e^{-tau Delta} u_n> over the extreme points with the mass of u_n.
inline MboOracleResult mbo_oracle(const Field& u_n, const Graph& g, const Spectrum& s,
                                  double tau) {
  const double M = std::min(std::max(mass(u_n, g), 0.0), g.total_mass());
  const auto points = enumerate_extreme_points(g, M);
  const Field diffused = s.diffuse(u_n, tau);
  std::vector<double> values;
  values.reserve(points.size());
  MboOracleResult res;
  res.max_value = -std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    values.push_back(inner_product(p.values, diffused, g));
    res.max_value = std::max(res.max_value, values.back());
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (values[k] >= res.max_value - 1e-12) res.argmax.push_back(points[k]);
  }
  return res;
}

/// Projection onto {0 <= x <= 1, mass(x) = M} in the r-weighted norm, by
/// Dykstra's alternating projections between the hyperplane and the box.
inline Field project_to_feasible(const Field& y, double M, const Graph& g, double tol = 1e-13,
                                 int max_iter = 1000000) {
  const int n = g.num_vertices();
  const double total = g.total_mass();
  Field x = y;
  Field p = Field::Zero(n);
  Field q = Field::Zero(n);
  for (int it = 0; it < max_iter; ++it) {
    Field z = x + p;
    Field h = z.array() + (M - mass(z, g)) / total;
    p = z - h;
    Field b = h + q;
    Field x_new = b.unaryExpr([](double v) { return std::min(1.0, std::max(0.0, v)); });
    q = b - x_new;
    const double change = sup_norm(x_new - x);
    x = std::move(x_new);
    if (change <= tol && std::abs(mass(x, g) - M) <= tol * (1.0 + total)) return x;
  }
  throw Error(ErrorKind::NoConvergence, "feasible-set projection did not converge");
}

struct VariationalOptions {
  int iters = 2000;
  std::optional<double> step_size;  // default 0.5 / (2 - lambda)
  double stop_tol = 1e-10;
};

/// Projected gradient descent on (1 - lambda)|u|^2 - 2<u, e^{-tau Delta} u_n>
/// over {0 <= u <= 1, mass(u) = mass(u_n)}, started from u_n.
inline Field variational_oracle(const Field& u_n, const Graph& g, const Spectrum& s,
                                const SchemeParams& p, const VariationalOptions& opt = {}) {
  detail::check_conforming(g, u_n.size(), "u_n");
  if (!(p.lambda >= 0.0 && p.lambda < 1.0)) {
    throw Error(ErrorKind::InvalidParameter, "variational_oracle needs lambda < 1");
  }
  detail::check_unit_interval(u_n, "u_n");
  const double step = opt.step_size.value_or(0.5 / (2.0 - p.lambda));
  const double M = mass(u_n, g);
  const Field diffused = s.diffuse(u_n, p.tau);
  const double w = 1.0 - p.lambda;
  auto objective = [&](const Field& u) {
    return w * inner_product(u, u, g) - 2.0 * inner_product(u, diffused, g);
  };
  Field u = project_to_feasible(u_n, M, g);
  for (int it = 0; it < opt.iters; ++it) {
    const Field grad = 2.0 * w * u - 2.0 * diffused;
    Field next = project_to_feasible(u - step * grad, M, g);
    const double change = norm(next - u, g);
    u = std::move(next);
    if (change <= opt.stop_tol) return u;
  }
  throw Error(ErrorKind::NoConvergence,
              "projected gradient did not converge; last objective " + std::to_string(objective(u)));
}

/// Composes ceil(t_final / tau_ref) semi-discrete steps with tau_ref <= eps / 100.
inline Field reference_flow(const Field& u0, const Graph& g, const Spectrum& s, double epsilon,
                            double t_final, double tau_ref) {
  if (!(tau_ref > 0.0) || tau_ref > epsilon / 100.0) {
    throw Error(ErrorKind::InvalidParameter, "reference step must satisfy 0 < tau <= eps / 100");
  }
  if (!(t_final >= 0.0)) throw Error(ErrorKind::NegativeTime, "t_final must be >= 0");
  detail::check_unit_interval(u0, "u0");
  const SchemeParams p = SchemeParams::make(epsilon, tau_ref);
  const long steps = static_cast<long>(std::ceil(t_final / tau_ref - 1e-9));
  Field u = u0;
  for (long k = 0; k < steps; ++k) u = sd_step(u, g, s, p).u_next;
  return u;
}

}  // namespace graph_phase
