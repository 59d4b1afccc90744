#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "lillab/rng.hpp"
#include "lillab/space.hpp"

// Exact reference for tiny transport instances: every vertex of the
// transportation polytope is the flow of a spanning tree of the bipartite
// support graph, so minimizing the cost over all feasible spanning-tree
// flows solves the linear program.
namespace test_oracle {

inline double w1_tree_enumeration(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                                  const lillab::Metric& metric) {
  const int n = static_cast<int>(mu.size());
  const int cells = n * n;
  const int tree_edges = 2 * n - 1;
  std::vector<int> pick(static_cast<std::size_t>(cells), 0);
  std::fill(pick.begin(), pick.begin() + tree_edges, 1);
  std::sort(pick.begin(), pick.end());
  double best = std::numeric_limits<double>::infinity();

  do {
    std::vector<std::pair<int, int>> edges;
    for (int c = 0; c < cells; ++c)
      if (pick[static_cast<std::size_t>(c)]) edges.push_back({c / n, c % n});

    // leaf stripping solves the balance equations if the edges form a tree
    std::vector<double> supply(static_cast<std::size_t>(n)),
        demand(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      supply[static_cast<std::size_t>(i)] = mu(i);
      demand[static_cast<std::size_t>(i)] = nu(i);
    }
    std::vector<int> deg(static_cast<std::size_t>(2 * n), 0);
    for (const auto& [i, j] : edges) {
      ++deg[static_cast<std::size_t>(i)];
      ++deg[static_cast<std::size_t>(n + j)];
    }
    std::vector<bool> used(edges.size(), false);
    double cost = 0.0;
    bool feasible = true;
    for (int pass = 0; pass < tree_edges; ++pass) {
      int e_found = -1;
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (used[e]) continue;
        const auto [i, j] = edges[e];
        if (deg[static_cast<std::size_t>(i)] == 1 ||
            deg[static_cast<std::size_t>(n + j)] == 1) {
          e_found = static_cast<int>(e);
          break;
        }
      }
      if (e_found < 0) {
        feasible = false;  // a cycle: not a tree
        break;
      }
      const auto [i, j] = edges[static_cast<std::size_t>(e_found)];
      const double flow = deg[static_cast<std::size_t>(i)] == 1
                              ? supply[static_cast<std::size_t>(i)]
                              : demand[static_cast<std::size_t>(j)];
      if (flow < -1e-12) {
        feasible = false;
        break;
      }
      cost += flow * metric.at(i, j);
      supply[static_cast<std::size_t>(i)] -= flow;
      demand[static_cast<std::size_t>(j)] -= flow;
      used[static_cast<std::size_t>(e_found)] = true;
      --deg[static_cast<std::size_t>(i)];
      --deg[static_cast<std::size_t>(n + j)];
    }
    if (feasible) best = std::min(best, cost);
  } while (std::next_permutation(pick.begin(), pick.end()));

  return best;
}

inline Eigen::VectorXd random_simplex(int n, lillab::rng::Stream& s, bool allow_zero) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    v(i) = s.uniform01();
    if (allow_zero && s.uniform01() < 0.25) v(i) = 0.0;
  }
  if (v.sum() == 0.0) v(0) = 1.0;
  return v / v.sum();
}

inline lillab::Metric random_line_metric(int n, lillab::rng::Stream& s) {
  std::vector<double> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) p = 3.0 * s.uniform01();
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i)
    pts[i] = std::max(pts[i], pts[i - 1] + 1e-3);  // keep states distinguishable
  Eigen::MatrixXd rho(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      rho(i, j) =
          std::abs(pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]);
  return lillab::Metric::matrix(rho);
}

}  // namespace test_oracle
