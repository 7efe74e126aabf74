#pragma once

// Benchmark network generators and the normalized Laplacian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dynetforge/autodiff.hpp"
#include "dynetforge/errors.hpp"

namespace dynetforge {

enum class GraphFamily { community, grid, er, powerlaw, smallworld };

inline std::string to_string(GraphFamily f) {
  switch (f) {
    case GraphFamily::community: return "community";
    case GraphFamily::grid: return "grid";
    case GraphFamily::er: return "er";
    case GraphFamily::powerlaw: return "powerlaw";
    case GraphFamily::smallworld: return "smallworld";
  }
  return "?";
}

inline GraphFamily parse_graph_family(const std::string& s) {
  if (s == "community") return GraphFamily::community;
  if (s == "grid") return GraphFamily::grid;
  if (s == "er" || s == "random") return GraphFamily::er;
  if (s == "powerlaw" || s == "power-law" || s == "ba") return GraphFamily::powerlaw;
  if (s == "smallworld" || s == "small-world" || s == "ws") return GraphFamily::smallworld;
  throw UsageError("unknown graph family '" + s + "'");
}

// Family-specific settings. er_p <= 0 means "mean degree 8", resolved at
// generation time and stored back into Graph::params.
struct GraphParams {
  int blocks = 4;
  double p_in = 0.25;
  double p_out = 0.01;
  double er_p = 0.0;
  int ba_m = 2;
  int ws_k = 4;
  double ws_p = 0.1;

  bool operator==(const GraphParams&) const = default;
};

using Edge = std::pair<int, int>;

struct Graph {
  int n = 0;
  std::vector<Edge> edges;  // sorted, first < second
  GraphFamily family = GraphFamily::er;
  GraphParams params;
  std::uint64_t seed = 0;

  std::vector<int> degrees() const {
    std::vector<int> deg(static_cast<std::size_t>(n), 0);
    for (const auto& [i, j] : edges) {
      ++deg[static_cast<std::size_t>(i)];
      ++deg[static_cast<std::size_t>(j)];
    }
    return deg;
  }

  ad::Matrix adjacency() const {
    ad::Matrix a = ad::Matrix::Zero(n, n);
    for (const auto& [i, j] : edges) {
      a(i, j) = 1.0;
      a(j, i) = 1.0;
    }
    return a;
  }

  bool operator==(const Graph&) const = default;
};

inline int connected_components(const Graph& g) {
  std::vector<int> parent(static_cast<std::size_t>(g.n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  int components = g.n;
  for (const auto& [i, j] : g.edges) {
    const int a = find(i);
    const int b = find(j);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components;
}

// Checks the structural invariants: endpoints in range, no self-loops, sorted
// and duplicate-free edge list.
inline void validate_graph(const Graph& g) {
  if (g.n < 1) throw UsageError("graph must have at least one node");
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& [i, j] = g.edges[e];
    if (i < 0 || j >= g.n || i >= j) {
      throw UsageError("invalid edge (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    if (e > 0 && !(g.edges[e - 1] < g.edges[e])) {
      throw UsageError("edge list not sorted or contains duplicates");
    }
  }
}

namespace detail {

inline bool is_perfect_square(int n, int& side) {
  side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  return side * side == n;
}

inline void check_probability(const char* name, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw UsageError(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
  }
}

inline std::vector<Edge> community_edges(int n, const GraphParams& prm, std::mt19937_64& rng) {
  if (prm.blocks < 1 || prm.blocks > n) throw UsageError("community blocks must lie in [1, n]");
  check_probability("p_in", prm.p_in);
  check_probability("p_out", prm.p_out);
  // Block sizes differ by at most one; earlier blocks take the remainder.
  std::vector<int> block(static_cast<std::size_t>(n));
  const int base = n / prm.blocks;
  const int extra = n % prm.blocks;
  int node = 0;
  for (int b = 0; b < prm.blocks; ++b) {
    const int size = base + (b < extra ? 1 : 0);
    for (int s = 0; s < size; ++s) block[static_cast<std::size_t>(node++)] = b;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p = block[i] == block[j] ? prm.p_in : prm.p_out;
      if (unif(rng) < p) edges.emplace_back(i, j);
    }
  }
  return edges;
}

inline std::vector<Edge> grid_edges(int n) {
  int side = 0;
  if (!is_perfect_square(n, side)) {
    throw UsageError("grid family requires n to be a perfect square, got " + std::to_string(n));
  }
  std::vector<Edge> edges;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int v = r * side + c;
      if (c + 1 < side) edges.emplace_back(v, v + 1);
      if (r + 1 < side) edges.emplace_back(v, v + side);
    }
  }
  return edges;
}

inline std::vector<Edge> er_edges(int n, double p, std::mt19937_64& rng) {
  check_probability("er_p", p);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (unif(rng) < p) edges.emplace_back(i, j);
    }
  }
  return edges;
}

// Preferential attachment seeded with a star on m + 1 nodes; every later
// node attaches m edges, so |E| = m (n - m).
inline std::vector<Edge> powerlaw_edges(int n, int m, std::mt19937_64& rng) {
  if (m < 1 || m >= n) throw UsageError("powerlaw m must lie in [1, n)");
  std::set<Edge> edges;
  std::vector<int> repeated;
  for (int leaf = 1; leaf <= m; ++leaf) {
    edges.emplace(0, leaf);
    repeated.push_back(0);
    repeated.push_back(leaf);
  }
  for (int source = m + 1; source < n; ++source) {
    std::set<int> targets;
    std::uniform_int_distribution<std::size_t> pick(0, repeated.size() - 1);
    while (static_cast<int>(targets.size()) < m) targets.insert(repeated[pick(rng)]);
    for (int t : targets) {
      edges.emplace(t, source);
      repeated.push_back(t);
      repeated.push_back(source);
    }
  }
  return {edges.begin(), edges.end()};
}

// Ring lattice with k nearest neighbours, each lattice edge rewired with
// probability p to a uniformly chosen non-neighbour.
inline std::vector<Edge> smallworld_edges(int n, int k, double p, std::mt19937_64& rng) {
  if (k < 2 || k % 2 != 0 || k >= n) throw UsageError("smallworld k must be even and in [2, n)");
  check_probability("ws_p", p);
  std::vector<std::set<int>> adj(static_cast<std::size_t>(n));
  auto link = [&](int a, int b) {
    adj[a].insert(b);
    adj[b].insert(a);
  };
  for (int j = 1; j <= k / 2; ++j) {
    for (int u = 0; u < n; ++u) link(u, (u + j) % n);
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int j = 1; j <= k / 2; ++j) {
    for (int u = 0; u < n; ++u) {
      if (unif(rng) >= p) continue;
      if (static_cast<int>(adj[u].size()) >= n - 1) continue;
      const int v = (u + j) % n;
      if (!adj[u].contains(v)) continue;
      int w = pick(rng);
      while (w == u || adj[u].contains(w)) w = pick(rng);
      adj[u].erase(v);
      adj[v].erase(u);
      link(u, w);
    }
  }
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    for (int w : adj[u]) {
      if (u < w) edges.emplace_back(u, w);
    }
  }
  return edges;
}

}  // namespace detail

// Deterministic for fixed (family, n, params, seed). Connectivity is not forced.
inline Graph generate_graph(GraphFamily family, int n, GraphParams params, std::uint64_t seed) {
  if (n < 2) throw UsageError("graph needs n >= 2, got " + std::to_string(n));
  std::mt19937_64 rng(seed);
  Graph g;
  g.n = n;
  g.family = family;
  g.seed = seed;
  switch (family) {
    case GraphFamily::community:
      g.edges = detail::community_edges(n, params, rng);
      break;
    case GraphFamily::grid:
      g.edges = detail::grid_edges(n);
      break;
    case GraphFamily::er:
      if (params.er_p == 0.0) params.er_p = std::min(1.0, 8.0 / static_cast<double>(n - 1));
      g.edges = detail::er_edges(n, params.er_p, rng);
      break;
    case GraphFamily::powerlaw:
      g.edges = detail::powerlaw_edges(n, params.ba_m, rng);
      break;
    case GraphFamily::smallworld:
      g.edges = detail::smallworld_edges(n, params.ws_k, params.ws_p, rng);
      break;
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.params = params;
  return g;
}

// D^{-1/2} (D - A) D^{-1/2}; isolated nodes get an all-zero row and column.
inline ad::Matrix normalized_laplacian(const Graph& g) {
  const auto deg = g.degrees();
  ad::Matrix phi = ad::Matrix::Zero(g.n, g.n);
  for (int i = 0; i < g.n; ++i) {
    if (deg[i] > 0) phi(i, i) = 1.0;
  }
  for (const auto& [i, j] : g.edges) {
    const double w = -1.0 / std::sqrt(static_cast<double>(deg[i]) * static_cast<double>(deg[j]));
    phi(i, j) = w;
    phi(j, i) = w;
  }
  return phi;
}

}  // namespace dynetforge
