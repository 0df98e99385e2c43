#pragma once

#include <cstddef>

#include "darkhash/tensor.hpp"

namespace darkhash {

struct GraphOptions {
  // Drop each column's nearest neighbour from the distribution entirely
  // instead of only shifting distances by rho_j. Needs N >= 3.
  bool exclude_nearest = false;
  double norm_floor = 1e-8;
};

// Column-stochastic neighbourhood graph: p(i, j) is the probability that
// sample i is a neighbour of sample j. The diagonal is unused and zero.
struct NeighborGraph {
  Mat p;

  std::size_t size() const { return static_cast<std::size_t>(p.rows()); }
};

// With d_ij the cosine distance and rho_j = min_{k != j} d_jk:
//   p(i, j) = (2 - (d_ij - rho_j)) / sum_{k != j} (2 - (d_jk - rho_j))
NeighborGraph build_graph(const Mat& features, const GraphOptions& opts = {});

// Every off-diagonal entry 1/(N-1): the graph of N identical points.
NeighborGraph uniform_graph(std::size_t n);

// -(1/N) sum_j sum_{i != j} q(i,j) * log(max(p(i,j), 1e-12))
double topology_ce(const NeighborGraph& p, const NeighborGraph& q);

// topology_ce(build_graph(features), q) and, when `grad` is set, its
// derivative with respect to the features.
double topology_ce_features(const Mat& features, const NeighborGraph& q, Mat* grad, const GraphOptions& opts = {});

// Cosine distance matrix with the norm floor applied.
Mat cosine_distances(const Mat& features, double norm_floor = 1e-8);

}  // namespace darkhash
