#pragma once

// Weighted graphs, r-weighted vertex inner products, the graph Laplacian and
// the spectral evaluation of the diffusion semigroup exp(-t Laplacian).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "graph_phase/error.hpp"

namespace graph_phase {

/// Real-valued function on the vertex set.
using Field = Eigen::VectorXd;

struct Edge {
  int i = 0;
  int j = 0;
  double weight = 0.0;
};

/// Finite, simple, connected, undirected, positively weighted graph together
/// with the inner-product exponent r. Immutable after construction.
class Graph {
 public:
  /// Validates the edge list and computes degrees. Each undirected edge is
  /// stored once with i < j, sorted lexicographically.
  static Graph build(int num_vertices, std::vector<Edge> edges, double r = 0.0) {
    if (num_vertices < 2) {
      throw Error(ErrorKind::InvalidParameter, "a graph needs at least 2 vertices");
    }
    if (!(r >= 0.0 && r <= 1.0)) {
      throw Error(ErrorKind::InvalidParameter, "r must lie in [0, 1], got " + std::to_string(r));
    }
    for (auto& e : edges) {
      if (e.i < 0 || e.j < 0 || e.i >= num_vertices || e.j >= num_vertices) {
        throw Error(ErrorKind::IndexOutOfRange, "edge (" + std::to_string(e.i) + ", " +
                                                    std::to_string(e.j) + ") out of range");
      }
      if (e.i == e.j) {
        throw Error(ErrorKind::SelfLoop, "self-loop at vertex " + std::to_string(e.i));
      }
      if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
        throw Error(ErrorKind::NonPositiveWeight, "edge (" + std::to_string(e.i) + ", " +
                                                      std::to_string(e.j) + ") has weight " +
                                                      std::to_string(e.weight));
      }
      if (e.i > e.j) std::swap(e.i, e.j);
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    for (std::size_t k = 1; k < edges.size(); ++k) {
      if (edges[k].i == edges[k - 1].i && edges[k].j == edges[k - 1].j) {
        throw Error(ErrorKind::DuplicateEdge, "edge (" + std::to_string(edges[k].i) + ", " +
                                                  std::to_string(edges[k].j) + ") given twice");
      }
    }

    Graph g;
    g.n_ = num_vertices;
    g.r_ = r;
    g.edges_ = std::move(edges);
    g.adjacency_.assign(static_cast<std::size_t>(num_vertices), {});
    g.degrees_ = Eigen::VectorXd::Zero(num_vertices);
    for (const auto& e : g.edges_) {
      g.adjacency_[e.i].emplace_back(e.j, e.weight);
      g.adjacency_[e.j].emplace_back(e.i, e.weight);
      g.degrees_[e.i] += e.weight;
      g.degrees_[e.j] += e.weight;
    }
    g.check_connected();
    g.degree_powers_ = g.degrees_.array().pow(r);
    g.total_mass_ = g.degree_powers_.sum();
    return g;
  }

  int num_vertices() const noexcept { return n_; }
  double r() const noexcept { return r_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::pair<int, double>>& neighbors(int i) const { return adjacency_[i]; }
  const Eigen::VectorXd& degrees() const noexcept { return degrees_; }
  /// d_i^r, the vertex weights of the inner product.
  const Eigen::VectorXd& degree_powers() const noexcept { return degree_powers_; }
  /// Mass of the constant field 1, i.e. <1, 1>.
  double total_mass() const noexcept { return total_mass_; }

  /// Dense matrix of the (generally non-symmetric) operator D^{-r}(D - W).
  Eigen::MatrixXd laplacian_matrix() const {
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n_, n_);
    for (const auto& e : edges_) {
      lap(e.i, e.j) -= e.weight;
      lap(e.j, e.i) -= e.weight;
    }
    for (int i = 0; i < n_; ++i) {
      lap(i, i) = degrees_[i];
      lap.row(i) /= degree_powers_[i];
    }
    return lap;
  }

 private:
  Graph() = default;

  void check_connected() const {
    std::vector<char> seen(static_cast<std::size_t>(n_), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
      int i = stack.back();
      stack.pop_back();
      for (const auto& [j, w] : adjacency_[i]) {
        if (!seen[j]) {
          seen[j] = 1;
          ++reached;
          stack.push_back(j);
        }
      }
    }
    if (reached != n_) {
      throw Error(ErrorKind::DisconnectedGraph, std::to_string(n_ - reached) +
                                                    " vertices unreachable from vertex 0");
    }
  }

  int n_ = 0;
  double r_ = 0.0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<int, double>>> adjacency_;
  Eigen::VectorXd degrees_;
  Eigen::VectorXd degree_powers_;
  double total_mass_ = 0.0;
};

inline Graph build_graph(int num_vertices, std::vector<Edge> edges, double r = 0.0) {
  return Graph::build(num_vertices, std::move(edges), r);
}

namespace detail {
inline void check_conforming(const Graph& g, Eigen::Index size, const char* what) {
  if (size != g.num_vertices()) {
    throw Error(ErrorKind::DimensionMismatch, std::string(what) + " has " + std::to_string(size) +
                                                  " entries, graph has " +
                                                  std::to_string(g.num_vertices()) + " vertices");
  }
}
}  // namespace detail

/// <u, v> = sum_i u_i v_i d_i^r
inline double inner_product(const Field& u, const Field& v, const Graph& g) {
  detail::check_conforming(g, u.size(), "u");
  detail::check_conforming(g, v.size(), "v");
  return (u.array() * v.array() * g.degree_powers().array()).sum();
}

inline double mass(const Field& u, const Graph& g) {
  detail::check_conforming(g, u.size(), "u");
  return u.dot(g.degree_powers());
}

inline double average(const Field& u, const Graph& g) { return mass(u, g) / g.total_mass(); }

inline double norm(const Field& u, const Graph& g) { return std::sqrt(inner_product(u, u, g)); }

inline double sup_norm(const Field& u) { return u.size() == 0 ? 0.0 : u.cwiseAbs().maxCoeff(); }

inline Field ones(const Graph& g) { return Field::Ones(g.num_vertices()); }

/// (Delta u)_i = d_i^{-r} sum_j w_ij (u_i - u_j)
inline Field laplacian_apply(const Field& u, const Graph& g) {
  detail::check_conforming(g, u.size(), "u");
  Field out = Field::Zero(g.num_vertices());
  for (const auto& e : g.edges()) {
    const double flux = e.weight * (u[e.i] - u[e.j]);
    out[e.i] += flux;
    out[e.j] -= flux;
  }
  return out.cwiseQuotient(g.degree_powers());
}

/// Half the squared edge norm of the gradient: 1/2 sum_{edges} w_ij (u_j - u_i)^2.
inline double dirichlet_energy(const Field& u, const Graph& g) {
  detail::check_conforming(g, u.size(), "u");
  double acc = 0.0;
  for (const auto& e : g.edges()) {
    const double diff = u[e.j] - u[e.i];
    acc += e.weight * diff * diff;
  }
  return 0.5 * acc;
}

/// Eigendecomposition of the Laplacian, orthonormal in the r-weighted inner
/// product. Computed from the symmetric matrix D^{-r/2}(D - W)D^{-r/2}.
class Spectrum {
 public:
  static Spectrum decompose(const Graph& g) {
    const int n = g.num_vertices();
    Spectrum s;
    s.half_pow_ = g.degrees().array().pow(0.5 * g.r());
    s.inv_half_pow_ = s.half_pow_.cwiseInverse();

    Eigen::MatrixXd sym = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : g.edges()) {
      const double v = -e.weight * s.inv_half_pow_[e.i] * s.inv_half_pow_[e.j];
      sym(e.i, e.j) = v;
      sym(e.j, e.i) = v;
    }
    for (int i = 0; i < n; ++i) sym(i, i) = g.degrees()[i] / g.degree_powers()[i];

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorKind::EigensolverFailure, "symmetric eigensolver did not converge");
    }
    s.eigenvalues_ = solver.eigenvalues();
    s.phi_ = solver.eigenvectors();

    // The kernel is spanned exactly by D^{r/2} 1 on a connected graph; pin it
    // so that diffusion fixes constants to rounding level.
    Eigen::VectorXd kernel = s.half_pow_ / s.half_pow_.norm();
    s.phi_.col(0) = kernel;
    for (int k = 1; k < n; ++k) {
      s.phi_.col(k) -= kernel.dot(s.phi_.col(k)) * kernel;
      s.phi_.col(k).normalize();
    }

    const double mu_max = s.eigenvalues_.cwiseAbs().maxCoeff();
    s.eigenvalues_[0] = 0.0;
    for (int k = 1; k < n; ++k) {
      if (std::abs(s.eigenvalues_[k]) <= 1e-12 * mu_max) s.eigenvalues_[k] = 0.0;
    }
    return s;
  }

  int size() const noexcept { return static_cast<int>(eigenvalues_.size()); }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  double max_eigenvalue() const { return eigenvalues_[size() - 1]; }

  /// Eigenvectors xi_k of the Laplacian as columns, with <xi_k, xi_l> = delta_kl.
  Eigen::MatrixXd eigenvectors() const { return inv_half_pow_.asDiagonal() * phi_; }

  /// Applies sum_k f(mu_k) <u, xi_k> xi_k.
  template <class Fn>
  Field apply_function(const Field& u, Fn&& f) const {
    if (u.size() != size()) {
      throw Error(ErrorKind::DimensionMismatch, "field does not conform to spectrum");
    }
    Eigen::VectorXd coeffs = phi_.transpose() * half_pow_.cwiseProduct(u);
    for (int k = 0; k < size(); ++k) coeffs[k] *= f(eigenvalues_[k]);
    return inv_half_pow_.cwiseProduct(phi_ * coeffs);
  }

  /// exp(-t Laplacian) u.
  Field diffuse(const Field& u, double t) const {
    if (!(t >= 0.0)) throw Error(ErrorKind::NegativeTime, "diffusion time must be >= 0");
    if (t == 0.0) {
      if (u.size() != size()) {
        throw Error(ErrorKind::DimensionMismatch, "field does not conform to spectrum");
      }
      return u;
    }
    return apply_function(u, [t](double mu) { return std::exp(-t * mu); });
  }

  /// Column-wise diffusion of a |V| x K matrix.
  Eigen::MatrixXd diffuse_columns(const Eigen::MatrixXd& values, double t) const {
    if (!(t >= 0.0)) throw Error(ErrorKind::NegativeTime, "diffusion time must be >= 0");
    if (values.rows() != size()) {
      throw Error(ErrorKind::DimensionMismatch, "matrix does not conform to spectrum");
    }
    if (t == 0.0) return values;
    Eigen::MatrixXd coeffs = phi_.transpose() * (half_pow_.asDiagonal() * values);
    for (int k = 0; k < size(); ++k) coeffs.row(k) *= std::exp(-t * eigenvalues_[k]);
    return inv_half_pow_.asDiagonal() * (phi_ * coeffs);
  }

 private:
  Spectrum() = default;

  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd phi_;
  Eigen::VectorXd half_pow_;
  Eigen::VectorXd inv_half_pow_;
};

inline Spectrum spectral_decompose(const Graph& g) { return Spectrum::decompose(g); }

inline Field diffuse(const Field& u, double t, const Spectrum& s) { return s.diffuse(u, t); }

}  // namespace graph_phase
