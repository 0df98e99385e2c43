#include "darkhash/neighbor_graph.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "darkhash/errors.hpp"

namespace darkhash {

namespace {

constexpr double kProbFloor = 1e-12;

struct GraphState {
  Mat unit;                 // features scaled by 1/max(norm, floor)
  Vec norms;                // max(norm, floor)
  Mat dist;                 // cosine distances
  std::vector<Eigen::Index> nearest;  // per column j
  Vec rho;
  Mat weight;               // 2 - (d_ij - rho_j); zero where excluded
  Vec total;                // column sums of weight
};

GraphState compute(const Mat& features, const GraphOptions& opts) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw InvalidInputError("neighbour graph needs at least 2 samples, got " + std::to_string(n));
  if (opts.exclude_nearest && n < 3) throw InvalidInputError("nearest-neighbour exclusion needs at least 3 samples");
  if (!features.allFinite()) throw InvalidInputError("neighbour graph: non-finite feature");

  GraphState s;
  s.norms = features.rowwise().norm().cwiseMax(opts.norm_floor);
  s.unit = features.array().colwise() / s.norms.array();
  s.dist = (Mat::Ones(n, n) - s.unit * s.unit.transpose()).eval();
  s.nearest.assign(static_cast<std::size_t>(n), 0);
  s.rho.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index best = j == 0 ? 1 : 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != j && s.dist(j, k) < s.dist(j, best)) best = k;
    }
    s.nearest[static_cast<std::size_t>(j)] = best;
    s.rho(j) = s.dist(j, best);
  }
  s.weight = Mat::Zero(n, n);
  s.total = Vec::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j || (opts.exclude_nearest && i == s.nearest[static_cast<std::size_t>(j)])) continue;
      s.weight(i, j) = 2.0 - (s.dist(i, j) - s.rho(j));
      s.total(j) += s.weight(i, j);
    }
  }
  return s;
}

}  // namespace

Mat cosine_distances(const Mat& features, double norm_floor) {
  const Vec norms = features.rowwise().norm().cwiseMax(norm_floor);
  const Mat unit = features.array().colwise() / norms.array();
  return Mat::Ones(features.rows(), features.rows()) - unit * unit.transpose();
}

NeighborGraph build_graph(const Mat& features, const GraphOptions& opts) {
  const GraphState s = compute(features, opts);
  NeighborGraph g;
  g.p = s.weight;
  for (Eigen::Index j = 0; j < g.p.cols(); ++j) g.p.col(j) /= s.total(j);
  return g;
}

NeighborGraph uniform_graph(std::size_t n) {
  if (n < 2) throw InvalidInputError("uniform graph needs at least 2 samples");
  const auto m = static_cast<Eigen::Index>(n);
  NeighborGraph g;
  g.p = Mat::Constant(m, m, 1.0 / static_cast<double>(n - 1));
  g.p.diagonal().setZero();
  return g;
}

double topology_ce(const NeighborGraph& p, const NeighborGraph& q) {
  if (p.size() != q.size()) {
    throw DimensionError("topology_ce: graphs of size " + std::to_string(p.size()) + " and " +
                         std::to_string(q.size()));
  }
  const Eigen::Index n = p.p.rows();
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j) continue;
      total -= q.p(i, j) * std::log(std::max(p.p(i, j), kProbFloor));
    }
  }
  return total / static_cast<double>(n);
}

double topology_ce_features(const Mat& features, const NeighborGraph& q, Mat* grad, const GraphOptions& opts) {
  const GraphState s = compute(features, opts);
  const Eigen::Index n = features.rows();
  if (static_cast<Eigen::Index>(q.size()) != n) throw DimensionError("topology_ce: reference graph size mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);

  // dL/dw(i,j) over the included entries of each column.
  Mat grad_w = Mat::Zero(n, n);
  double value = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    double coeff = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j) continue;
      const double w = s.weight(i, j);
      const double p = w / s.total(j);
      const bool included = !(opts.exclude_nearest && i == s.nearest[static_cast<std::size_t>(j)]);
      if (!included || p < kProbFloor) {
        value -= q.p(i, j) * std::log(kProbFloor);
        continue;
      }
      value -= q.p(i, j) * std::log(p);
      grad_w(i, j) -= inv_n * q.p(i, j) / w;
      coeff += inv_n * q.p(i, j) / s.total(j);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j || (opts.exclude_nearest && i == s.nearest[static_cast<std::size_t>(j)])) continue;
      grad_w(i, j) += coeff;
    }
  }
  value *= inv_n;
  if (!grad) return value;

  // w(i,j) = 2 - d(i,j) + rho_j, rho_j = d(j, nearest_j). grad_d(a,b) is
  // the derivative with respect to the (symmetric) distance between a and b,
  // accumulated per ordered occurrence.
  Mat grad_d = -grad_w;
  for (Eigen::Index j = 0; j < n; ++j) {
    grad_d(j, s.nearest[static_cast<std::size_t>(j)]) += grad_w.col(j).sum();
  }
  // d(a,b) = 1 - u_a . u_b
  const Mat sym = grad_d + grad_d.transpose();
  const Mat grad_unit = -(sym * s.unit);
  grad->resize(n, features.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double raw_norm = features.row(i).norm();
    if (raw_norm >= opts.norm_floor) {
      const RowVec u = s.unit.row(i);
      grad->row(i) = (grad_unit.row(i) - u * u.dot(grad_unit.row(i))) / raw_norm;
    } else {
      grad->row(i) = grad_unit.row(i) / opts.norm_floor;
    }
  }
  return value;
}

}  // namespace darkhash
