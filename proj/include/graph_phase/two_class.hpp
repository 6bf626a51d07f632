#pragma once

// Mass-conserving semi-discrete step (0 <= lambda < 1), the mass-conserving
// MBO step (lambda = 1), multiplier recovery, certificates and energies.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "graph_phase/error.hpp"
#include "graph_phase/graph.hpp"

namespace graph_phase {

inline constexpr double kDefaultGroupTol = 1e-12;
inline constexpr double kDomainSlack = 1e-12;

struct SchemeParams {
  double epsilon = 1.0;
  double tau = 0.1;
  double lambda = 0.1;

  /// lambda = tau / epsilon; epsilon = +inf gives the pure-diffusion case.
  static SchemeParams make(double epsilon, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      throw Error(ErrorKind::InvalidParameter, "tau must be positive and finite");
    }
    if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidParameter, "epsilon must be positive");
    if (tau > epsilon) {
      throw Error(ErrorKind::InvalidParameter, "tau must not exceed epsilon");
    }
    return SchemeParams{epsilon, tau, std::isinf(epsilon) ? 0.0 : tau / epsilon};
  }

  /// Keeps lambda exactly as given (epsilon is derived), which matters for
  /// lambda = 1 - 2^-j where tau / (tau / lambda) need not round back.
  static SchemeParams from_lambda(double tau, double lambda) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      throw Error(ErrorKind::InvalidParameter, "tau must be positive and finite");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw Error(ErrorKind::InvalidParameter, "lambda must lie in [0, 1]");
    }
    const double eps = lambda > 0.0 ? tau / lambda : std::numeric_limits<double>::infinity();
    return SchemeParams{eps, tau, lambda};
  }
};

/// Distinct values of a diffused field (grouped within a tolerance) and the
/// d^r-weight of each level set.
struct ThresholdLevels {
  std::vector<double> alpha;   // strictly increasing
  std::vector<double> weight;  // a_l
  std::vector<int> count;      // vertices per level
  std::vector<int> group;      // vertex -> level index

  int size() const { return static_cast<int>(alpha.size()); }
  double total_weight() const { return std::accumulate(weight.begin(), weight.end(), 0.0); }
  double min_alpha() const { return alpha.front(); }
  double max_alpha() const { return alpha.back(); }
};

/// Sorted values v are split into a new level whenever v exceeds the first
/// value of the current level by more than group_tol. The level value is the
/// d^r-weighted mean of its members, so sum_l a_l alpha_l equals the mass.
inline ThresholdLevels threshold_levels(const Field& diffused, const Graph& g,
                                        double group_tol = kDefaultGroupTol) {
  detail::check_conforming(g, diffused.size(), "diffused field");
  if (!(group_tol >= 0.0)) throw Error(ErrorKind::InvalidParameter, "group_tol must be >= 0");
  const int n = g.num_vertices();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return diffused[a] < diffused[b]; });

  ThresholdLevels lv;
  lv.group.assign(static_cast<std::size_t>(n), 0);
  const auto& dr = g.degree_powers();
  double first = 0.0;
  double weighted = 0.0;
  for (int idx = 0; idx < n; ++idx) {
    const int i = order[idx];
    const double v = diffused[i];
    if (idx == 0 || v - first > group_tol) {
      if (idx > 0) lv.alpha.push_back(weighted / lv.weight.back());
      first = v;
      weighted = 0.0;
      lv.weight.push_back(0.0);
      lv.count.push_back(0);
    }
    lv.weight.back() += dr[i];
    lv.count.back() += 1;
    weighted += dr[i] * v;
    lv.group[i] = static_cast<int>(lv.weight.size()) - 1;
  }
  lv.alpha.push_back(weighted / lv.weight.back());
  return lv;
}

/// Multiplier of a lambda < 1 step. The solution nu is stored together with
/// an anchored form nu = anchor_alpha - (1 - lambda) * offset, which keeps
/// (alpha_l - nu) / (1 - lambda) accurate when 1 - lambda is tiny. Without an
/// anchor (anchor_level < 0) nu itself is used.
struct NuMultiplier {
  double nu = 0.0;
  double lo = 0.0;  // maximal solution interval (may be infinite)
  double hi = 0.0;
  int anchor_level = -1;
  double anchor_alpha = 0.0;
  double offset = 0.0;
};

/// Multiplier of a lambda = 1 step: threshold level k, its value and the
/// uniform fill theta on that level set.
struct ThresholdMultiplier {
  int k = 0;
  double alpha_k = 0.0;
  double theta = 0.0;
};

using Multiplier = std::variant<NuMultiplier, ThresholdMultiplier>;

/// Scalar summary used in logs: nu for lambda < 1, alpha_k for lambda = 1.
inline double multiplier_value(const Multiplier& m) {
  if (const auto* nu = std::get_if<NuMultiplier>(&m)) return nu->nu;
  return std::get<ThresholdMultiplier>(m).alpha_k;
}

namespace detail {

inline double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

inline double mass_tolerance(double total) { return 1e-12 * (1.0 + total); }

/// (alpha_l - nu) / (1 - lambda) before clamping.
inline double unclamped_level_value(const NuMultiplier& m, double alpha, double w) {
  if (m.anchor_level >= 0) return (alpha - m.anchor_alpha) / w + m.offset;
  return (alpha - m.nu) / w;
}

struct Breakpoint {
  int level;
  double s;  // value alpha_level - s * w, s in {0, 1}
};

}  // namespace detail

/// Solves M = sum_l a_l clamp((alpha_l - nu) / (1 - lambda), 0, 1) exactly by
/// locating the affine piece that contains the root.
inline NuMultiplier solve_nu(const ThresholdLevels& lv, double M, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) {
    throw Error(ErrorKind::InvalidParameter, "solve_nu needs 0 <= lambda < 1");
  }
  const double total = lv.total_weight();
  const double tol = detail::mass_tolerance(total);
  if (!(M >= -tol && M <= total + tol)) {
    throw Error(ErrorKind::MassOutOfRange, "target mass " + std::to_string(M) +
                                               " outside [0, " + std::to_string(total) + "]");
  }
  const double w = 1.0 - lambda;
  const int K = lv.size();
  const double inf = std::numeric_limits<double>::infinity();

  auto value = [&](const detail::Breakpoint& b) { return lv.alpha[b.level] - b.s * w; };
  auto anchored = [&](const detail::Breakpoint& b) {
    NuMultiplier m;
    m.nu = value(b);
    m.lo = m.hi = m.nu;
    m.anchor_level = b.level;
    m.anchor_alpha = lv.alpha[b.level];
    m.offset = b.s;
    return m;
  };
  // Picks a solution in [lo, hi] ∩ [0, lambda]; lo_bp / hi_bp are the
  // breakpoints at finite ends, used for anchored representations.
  auto choose = [&](double lo, double hi, const detail::Breakpoint* lo_bp,
                    const detail::Breakpoint* hi_bp) {
    const double a = std::max(lo, 0.0);
    const double b = std::min(hi, lambda);
    NuMultiplier m;
    if (a > b) {
      if (hi < 0.0) {
        m = anchored(*hi_bp);
      } else {
        m = anchored(*lo_bp);
      }
    } else if (a == lo && b == hi && lo_bp && hi_bp) {
      // midpoint of two breakpoints, anchored at the left one
      m.anchor_level = lo_bp->level;
      m.anchor_alpha = lv.alpha[lo_bp->level];
      const double da = lv.alpha[hi_bp->level] - lv.alpha[lo_bp->level];
      m.offset = lo_bp->s - da / (2.0 * w) + 0.5 * (hi_bp->s - lo_bp->s);
      m.nu = 0.5 * (lo + hi);
    } else {
      m.nu = 0.5 * (a + b);
    }
    m.lo = lo;
    m.hi = hi;
    return m;
  };

  detail::Breakpoint first{0, 1.0};
  detail::Breakpoint last{K - 1, 0.0};
  if (M >= total - tol) return choose(-inf, value(first), nullptr, &first);
  if (M <= tol) return choose(value(last), inf, &last, nullptr);

  std::vector<detail::Breakpoint> bps;
  bps.reserve(2 * static_cast<std::size_t>(K));
  for (int l = 0; l < K; ++l) {
    bps.push_back({l, 1.0});
    bps.push_back({l, 0.0});
  }
  std::sort(bps.begin(), bps.end(), [&](const detail::Breakpoint& x, const detail::Breakpoint& y) {
    const double d = (lv.alpha[x.level] - lv.alpha[y.level]) - (x.s - y.s) * w;
    if (d != 0.0) return d < 0.0;
    if (x.level != y.level) return x.level < y.level;
    return x.s > y.s;
  });
  auto F = [&](const detail::Breakpoint& b) {
    const double anchor = lv.alpha[b.level];
    double acc = 0.0;
    for (int l = 0; l < K; ++l) {
      acc += lv.weight[l] * detail::clamp01((lv.alpha[l] - anchor) / w + b.s);
    }
    return acc;
  };

  const int nb = static_cast<int>(bps.size());
  std::vector<double> fval(static_cast<std::size_t>(nb), std::numeric_limits<double>::quiet_NaN());
  auto Fi = [&](int i) {
    if (std::isnan(fval[i])) fval[i] = F(bps[i]);
    return fval[i];
  };
  // first index with F <= M + tol, last index with F >= M - tol
  int lo_idx = nb;
  for (int a = 0, b = nb; a < b;) {
    const int mid = (a + b) / 2;
    if (Fi(mid) <= M + tol) {
      lo_idx = mid;
      b = mid;
    } else {
      a = mid + 1;
    }
  }
  int hi_idx = -1;
  for (int a = 0, b = nb; a < b;) {
    const int mid = (a + b) / 2;
    if (Fi(mid) >= M - tol) {
      hi_idx = mid;
      a = mid + 1;
    } else {
      b = mid;
    }
  }

  if (lo_idx <= hi_idx) {
    const auto& L = bps[lo_idx];
    const auto& R = bps[hi_idx];
    if (!(value(R) > value(L))) {
      NuMultiplier m = anchored(L);
      return m;
    }
    return choose(value(L), value(R), &L, &R);
  }

  // Root strictly inside the segment between bps[hi_idx] and bps[lo_idx].
  const int left = hi_idx;
  std::vector<int> pos_low(static_cast<std::size_t>(K));   // index of alpha_l - w
  std::vector<int> pos_high(static_cast<std::size_t>(K));  // index of alpha_l
  for (int i = 0; i < nb; ++i) {
    (bps[i].s == 1.0 ? pos_low : pos_high)[bps[i].level] = i;
  }
  int anchor = -1;
  for (int l = K - 1; l >= 0; --l) {
    if (pos_low[l] <= left && pos_high[l] > left) {
      anchor = l;
      break;
    }
  }
  if (anchor < 0) {
    throw Error(ErrorKind::NoConvergence, "no active level on bracketing segment");
  }
  // Saturated weight is accumulated from the top level down, the same order
  // mbo_step uses for its cumulative weights.
  double saturated = 0.0;
  double active_weight = 0.0;
  double active_shift = 0.0;
  for (int l = K - 1; l >= 0; --l) {
    if (pos_low[l] > left) {
      saturated += lv.weight[l];
    } else if (pos_high[l] > left) {
      active_weight += lv.weight[l];
      active_shift += lv.weight[l] * ((lv.alpha[l] - lv.alpha[anchor]) / w);
    }
  }
  NuMultiplier m;
  m.anchor_level = anchor;
  m.anchor_alpha = lv.alpha[anchor];
  m.offset = (M - saturated - active_shift) / active_weight;
  m.nu = m.anchor_alpha - w * m.offset;
  m.lo = m.hi = m.nu;
  return m;
}

struct StepResult {
  Field u_next;
  Multiplier multiplier;
  Field beta;
  double residual = 0.0;
  double mass_in = 0.0;
  double mass_out = 0.0;
  Field diffused;
  ThresholdLevels levels;
};

namespace detail {

inline void check_unit_interval(const Field& u, const char* what) {
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!(u[i] >= -kDomainSlack && u[i] <= 1.0 + kDomainSlack)) {
      throw Error(ErrorKind::DomainViolation, std::string(what) + " entry " + std::to_string(i) +
                                                  " = " + std::to_string(u[i]) +
                                                  " outside [0, 1]");
    }
  }
}

inline Field beta_from_levels(const ThresholdLevels& lv, const Multiplier& mult, double lambda) {
  const int n = static_cast<int>(lv.group.size());
  Field beta = Field::Zero(n);
  if (const auto* tm = std::get_if<ThresholdMultiplier>(&mult)) {
    for (int i = 0; i < n; ++i) {
      const int l = lv.group[i];
      beta[i] = l == tm->k ? 0.0 : tm->alpha_k - lv.alpha[l];
    }
    return beta;
  }
  if (lambda == 0.0) return beta;
  const auto& nm = std::get<NuMultiplier>(mult);
  const double w = 1.0 - lambda;
  for (int i = 0; i < n; ++i) {
    const double t = unclamped_level_value(nm, lv.alpha[lv.group[i]], w);
    beta[i] = -(w / lambda) * (t - clamp01(t));
  }
  return beta;
}

}  // namespace detail

/// sup norm of u' - e^{-tau Delta} u - lambda u' + lambda avg(u') 1
///               - lambda beta + lambda avg(beta) 1
inline double sd_residual(const Field& u_n, const Field& u_next, const Field& beta,
                          const SchemeParams& p, const Spectrum& s, const Graph& g) {
  detail::check_conforming(g, u_n.size(), "u_n");
  detail::check_conforming(g, u_next.size(), "u_next");
  detail::check_conforming(g, beta.size(), "beta");
  const Field diffused = s.diffuse(u_n, p.tau);
  const double lam = p.lambda;
  Field r = u_next - diffused - lam * u_next - lam * beta;
  r.array() += lam * average(u_next, g) + lam * average(beta, g);
  return sup_norm(r);
}

namespace detail {
inline StepResult finish_step(StepResult res, const Graph& g, const SchemeParams& p) {
  res.beta = beta_from_levels(res.levels, res.multiplier, p.lambda);
  res.mass_out = mass(res.u_next, g);
  const double lam = p.lambda;
  Field r = res.u_next - res.diffused - lam * res.u_next - lam * res.beta;
  r.array() += lam * average(res.u_next, g) + lam * average(res.beta, g);
  res.residual = sup_norm(r);
  return res;
}
}  // namespace detail

/// One step of the mass-conserving semi-discrete scheme for 0 <= lambda < 1.
inline StepResult sd_step(const Field& u_n, const Graph& g, const Spectrum& s,
                          const SchemeParams& p, double group_tol = kDefaultGroupTol) {
  detail::check_conforming(g, u_n.size(), "u_n");
  if (!(p.lambda >= 0.0 && p.lambda < 1.0)) {
    throw Error(ErrorKind::InvalidParameter, "sd_step needs 0 <= lambda < 1; use mbo_step");
  }
  detail::check_unit_interval(u_n, "u_n");
  StepResult res;
  res.mass_in = mass(u_n, g);
  res.diffused = s.diffuse(u_n, p.tau);
  res.levels = threshold_levels(res.diffused, g, group_tol);
  const int n = g.num_vertices();

  if (p.lambda == 0.0) {
    NuMultiplier m;
    m.nu = 0.0;
    res.multiplier = m;
    res.u_next = res.diffused.unaryExpr([](double x) { return detail::clamp01(x); });
    return detail::finish_step(std::move(res), g, p);
  }

  const double total = g.total_mass();
  const double M = std::min(std::max(res.mass_in, 0.0), total);
  const NuMultiplier m = solve_nu(res.levels, M, p.lambda);
  res.multiplier = m;
  const double w = 1.0 - p.lambda;
  const double tol = detail::mass_tolerance(total);
  res.u_next.resize(n);
  if (M >= total - tol) {
    res.u_next.setOnes();
  } else if (M <= tol) {
    res.u_next.setZero();
  } else {
    for (int i = 0; i < n; ++i) {
      const double alpha = res.levels.alpha[res.levels.group[i]];
      res.u_next[i] = detail::clamp01(detail::unclamped_level_value(m, alpha, w));
    }
  }
  return detail::finish_step(std::move(res), g, p);
}

/// One step of the mass-conserving MBO scheme (lambda = 1): threshold at the
/// level alpha_k that makes the mass fit, splitting uniformly on its level set.
inline StepResult mbo_step(const Field& u_n, const Graph& g, const Spectrum& s, double tau,
                           double group_tol = kDefaultGroupTol) {
  detail::check_conforming(g, u_n.size(), "u_n");
  detail::check_unit_interval(u_n, "u_n");
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidParameter, "tau must be positive");
  StepResult res;
  res.mass_in = mass(u_n, g);
  res.diffused = s.diffuse(u_n, tau);
  res.levels = threshold_levels(res.diffused, g, group_tol);
  const auto& lv = res.levels;
  const int K = lv.size();
  const double total = g.total_mass();
  const double tol = detail::mass_tolerance(total);
  const double M = std::min(std::max(res.mass_in, 0.0), total);

  std::vector<double> cumulative(static_cast<std::size_t>(K) + 1, 0.0);  // B_k = sum_{l>=k} a_l
  for (int l = K - 1; l >= 0; --l) cumulative[l] = cumulative[l + 1] + lv.weight[l];
  int k = 0;
  for (int l = K - 1; l >= 0; --l) {
    if (cumulative[l] >= M - tol) {
      k = l;
      break;
    }
  }
  ThresholdMultiplier tm;
  tm.k = k;
  tm.alpha_k = lv.alpha[k];
  tm.theta = std::abs(cumulative[k] - M) <= tol
                 ? 1.0
                 : detail::clamp01((M - cumulative[k + 1]) / lv.weight[k]);
  const int n = g.num_vertices();
  // keep the incoming split value if it reproduces the mass within tolerance,
  // so that a fixed point repeats exactly
  bool same_split = true;
  int seen = 0;
  double previous = 0.0;
  for (int i = 0; i < n && same_split; ++i) {
    if (lv.group[i] != k) continue;
    if (seen++ == 0) previous = u_n[i];
    same_split = u_n[i] == previous;
  }
  if (same_split && seen > 0 && previous >= 0.0 && previous <= 1.0 &&
      std::abs(previous - tm.theta) * lv.weight[k] <= tol) {
    tm.theta = previous;
  }
  res.multiplier = tm;

  res.u_next.resize(n);
  for (int i = 0; i < n; ++i) {
    const int l = lv.group[i];
    res.u_next[i] = l > k ? 1.0 : (l < k ? 0.0 : tm.theta);
  }
  SchemeParams p = SchemeParams::from_lambda(tau, 1.0);
  return detail::finish_step(std::move(res), g, p);
}

/// True iff the lambda = 1 problem has a single solution: either the mass
/// exactly fills the levels from alpha_k up, or the alpha_k level set is a
/// single vertex.
inline bool mbo_is_unique(const Field& u_n, const Graph& g, const Spectrum& s, double tau,
                          double group_tol = kDefaultGroupTol) {
  const StepResult res = mbo_step(u_n, g, s, tau, group_tol);
  const auto& tm = std::get<ThresholdMultiplier>(res.multiplier);
  if (tm.theta == 1.0) return true;
  return res.levels.count[tm.k] == 1;
}

/// Recomputes the subgradient beta for a step output from its multiplier.
inline Field recover_beta(const Field& u_n, const Field& u_next, const Multiplier& mult,
                          const SchemeParams& p, const Graph& g, const Spectrum& s,
                          double group_tol = kDefaultGroupTol) {
  detail::check_conforming(g, u_n.size(), "u_n");
  detail::check_conforming(g, u_next.size(), "u_next");
  const Field diffused = s.diffuse(u_n, p.tau);
  const ThresholdLevels lv = threshold_levels(diffused, g, group_tol);
  const int n = g.num_vertices();
  const bool threshold = std::holds_alternative<ThresholdMultiplier>(mult);
  if (threshold != (p.lambda == 1.0)) {
    throw Error(ErrorKind::InconsistentInputs, "multiplier kind does not match lambda");
  }
  Field expected(n);
  if (const auto* tm = std::get_if<ThresholdMultiplier>(&mult)) {
    if (tm->k < 0 || tm->k >= lv.size() || std::abs(lv.alpha[tm->k] - tm->alpha_k) > 1e-12) {
      throw Error(ErrorKind::InconsistentInputs, "threshold level not present in diffused field");
    }
    for (int i = 0; i < n; ++i) {
      const int l = lv.group[i];
      expected[i] = l > tm->k ? 1.0 : (l < tm->k ? 0.0 : tm->theta);
    }
  } else if (p.lambda == 0.0) {
    expected = diffused.unaryExpr([](double x) { return detail::clamp01(x); });
  } else {
    const auto& nm = std::get<NuMultiplier>(mult);
    for (int i = 0; i < n; ++i) {
      expected[i] = detail::clamp01(
          detail::unclamped_level_value(nm, lv.alpha[lv.group[i]], 1.0 - p.lambda));
    }
  }
  if (sup_norm(expected - u_next) > 1e-9) {
    throw Error(ErrorKind::InconsistentInputs, "u_next is not generated by the multiplier");
  }
  return detail::beta_from_levels(lv, mult, p.lambda);
}

/// Non-mass-conserving semi-discrete step clamp((diffused - lambda/2) / (1 - lambda)).
inline Field free_sd_step(const Field& u_n, const Graph& g, const Spectrum& s,
                          const SchemeParams& p) {
  detail::check_conforming(g, u_n.size(), "u_n");
  if (!(p.lambda >= 0.0 && p.lambda < 1.0)) {
    throw Error(ErrorKind::InvalidParameter, "free_sd_step needs 0 <= lambda < 1");
  }
  detail::check_unit_interval(u_n, "u_n");
  const Field diffused = s.diffuse(u_n, p.tau);
  const double w = 1.0 - p.lambda;
  return diffused.unaryExpr(
      [&](double x) { return detail::clamp01((x - 0.5 * p.lambda) / w); });
}

struct LyapunovValue {
  double H = 0.0;
  double H_tau = 0.0;  // H / (2 tau)
};

/// H(u) = lambda <u, 1 - u> + <u, (I - e^{-tau Delta}) u>
inline LyapunovValue lyapunov_H(const Field& u, const SchemeParams& p, const Spectrum& s,
                                const Graph& g) {
  detail::check_conforming(g, u.size(), "u");
  detail::check_unit_interval(u, "u");
  const Field one_minus = Field::Ones(u.size()) - u;
  const Field smoothed = u - s.diffuse(u, p.tau);
  const double H = p.lambda * inner_product(u, one_minus, g) + inner_product(u, smoothed, g);
  return {H, H / (2.0 * p.tau)};
}

/// Dirichlet energy plus the double-obstacle potential scaled by 1/epsilon;
/// +inf outside [0, 1].
inline double ginzburg_landau(const Field& u, const Graph& g, double epsilon) {
  detail::check_conforming(g, u.size(), "u");
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!(u[i] >= -kDomainSlack && u[i] <= 1.0 + kDomainSlack)) {
      return std::numeric_limits<double>::infinity();
    }
  }
  double potential = 0.0;
  if (!std::isinf(epsilon)) {
    const auto& dr = g.degree_powers();
    for (Eigen::Index i = 0; i < u.size(); ++i) potential += dr[i] * 0.5 * u[i] * (1.0 - u[i]);
    potential /= epsilon;
  }
  return dirichlet_energy(u, g) + potential;
}

/// Gradient of H restricted to the mass hyperplane, at strictly interior u:
/// 2(u - e^{-tau Delta} u) - 2 lambda u + 2 lambda avg(u) 1.
inline Field lyapunov_gradient(const Field& u, const SchemeParams& p, const Spectrum& s,
                               const Graph& g) {
  detail::check_conforming(g, u.size(), "u");
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0 && u[i] < 1.0)) {
      throw Error(ErrorKind::BoundaryState,
                  "entry " + std::to_string(i) + " = " + std::to_string(u[i]) + " not in (0, 1)");
    }
  }
  Field grad = 2.0 * (u - s.diffuse(u, p.tau)) - 2.0 * p.lambda * u;
  grad.array() += 2.0 * p.lambda * average(u, g);
  return grad;
}

struct DualCertificate {
  Field xi;
  Field mu;
  double nu = 0.0;
  Field u_star;
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  double slackness_violation = 0.0;  // max |xi_i u_i|, |mu_i (1 - u_i)|
};

/// KKT multipliers and primal/dual values for a lambda < 1 step, certifying
/// that u_next minimizes (1 - lambda)|u|^2 - 2<u, e^{-tau Delta} u_n> subject
/// to 0 <= u <= 1 and mass(u) = mass(u_n).
inline DualCertificate dual_certificate(const Field& u_n, const StepResult& step,
                                        const SchemeParams& p, const Graph& g,
                                        const Spectrum& s) {
  if (p.lambda >= 1.0) {
    throw Error(ErrorKind::LambdaIsOne, "the certificate is defined for lambda < 1 only");
  }
  const auto* nm = std::get_if<NuMultiplier>(&step.multiplier);
  if (nm == nullptr) {
    throw Error(ErrorKind::InconsistentInputs, "step does not carry a nu multiplier");
  }
  detail::check_conforming(g, u_n.size(), "u_n");
  const Field& u = step.u_next;
  detail::check_conforming(g, u.size(), "u_next");
  const Field diffused = s.diffuse(u_n, p.tau);
  const int n = g.num_vertices();
  const double w = 1.0 - p.lambda;
  const double M = mass(u_n, g);

  DualCertificate c;
  c.nu = nm->nu;
  c.xi = Field::Zero(n);
  c.mu = Field::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (u[i] <= kDomainSlack) c.xi[i] = std::max(0.0, 2.0 * c.nu - 2.0 * diffused[i]);
    if (u[i] >= 1.0 - kDomainSlack) {
      c.mu[i] = std::max(0.0, 2.0 * diffused[i] - 2.0 * w - 2.0 * c.nu);
    }
    c.slackness_violation =
        std::max({c.slackness_violation, std::abs(c.xi[i] * u[i]), std::abs(c.mu[i] * (1.0 - u[i]))});
  }
  c.u_star = (2.0 * diffused + c.xi - c.mu - Field::Constant(n, 2.0 * c.nu)) / (2.0 * w);
  c.primal_value = w * inner_product(u, u, g) - 2.0 * inner_product(u, diffused, g);
  c.dual_value = -(w * inner_product(c.u_star, c.u_star, g) + mass(c.mu, g) + 2.0 * c.nu * M);
  c.gap = c.primal_value - c.dual_value;
  return c;
}

}  // namespace graph_phase
