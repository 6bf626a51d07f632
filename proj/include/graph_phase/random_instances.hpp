#pragma once

// Seeded random graphs and fields for test suites and the oracle-check command.

#include <random>
#include <set>
#include <utility>
#include <vector>

#include "graph_phase/graph.hpp"
#include "graph_phase/multi_class.hpp"

namespace graph_phase {

using Rng = std::mt19937_64;

/// Uniform double in (0, 1].
inline double uniform_open_closed(Rng& rng) {
  return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability extra_edge_prob; weights uniform in (0, 1].
inline Graph random_graph(Rng& rng, int n, double extra_edge_prob, double r) {
  std::vector<Edge> edges;
  std::set<std::pair<int, int>> used;
  for (int v = 1; v < n; ++v) {
    const int parent = std::uniform_int_distribution<int>(0, v - 1)(rng);
    edges.push_back({parent, v, uniform_open_closed(rng)});
    used.insert({parent, v});
  }
  std::bernoulli_distribution extra(extra_edge_prob);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (used.count({i, j}) == 0 && extra(rng)) edges.push_back({i, j, uniform_open_closed(rng)});
    }
  }
  return build_graph(n, std::move(edges), r);
}

/// Entries uniform in [0, 1].
inline Field random_field(Rng& rng, int n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Field u(n);
  for (int i = 0; i < n; ++i) u[i] = unit(rng);
  return u;
}

/// Binary field with each entry 1 with probability 1/2.
inline Field random_binary_field(Rng& rng, int n) {
  std::bernoulli_distribution coin(0.5);
  Field u(n);
  for (int i = 0; i < n; ++i) u[i] = coin(rng) ? 1.0 : 0.0;
  return u;
}

/// Rows drawn uniformly from the simplex (normalized exponentials).
inline SimplexField random_simplex_field(Rng& rng, int n, int K) {
  std::exponential_distribution<double> expo(1.0);
  SimplexField U(n, K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) U(i, k) = expo(rng);
    U.row(i) /= U.row(i).sum();
  }
  return U;
}

}  // namespace graph_phase
