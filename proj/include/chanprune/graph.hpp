#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "chanprune/core.hpp"

namespace chanprune {

/// Fisher within-/between-class sample graphs and their Laplacians.
///
/// within(i, j) = 1/n_k when samples i and j share class k, else 0;
/// between(i, j) = 1/N - within(i, j). Every row of `within` sums to 1 and
/// every row of `between` to 0, so the between-class degree matrix vanishes
/// and between_laplacian = -between.
struct ClassGraphs {
  Eigen::MatrixXd within;
  Eigen::MatrixXd between;
  Eigen::MatrixXd within_laplacian;
  Eigen::MatrixXd between_laplacian;
  std::vector<int> class_counts;
};

ClassGraphs build_class_graphs(std::span<const int> labels, int num_classes);

/// Global average pooling: returns a c x N matrix of per-channel spatial means.
Eigen::MatrixXd spatial_aggregate(const FeatureBlock& block);

/// Reference path: b_i = o_i^T Lb o_i and w_i = o_i^T Lw o_i over the dense
/// N x N Laplacians. `features` is c x N.
LayerScatter channel_scatter_dense(const Eigen::MatrixXd& features,
                                   const ClassGraphs& graphs);

/// Same quantities from class means in O(cN):
///   w_i = sum_k sum_{j in k} (o_ij - mu_ki)^2
///   b_i = sum_k n_k (mu_ki - mu_i)^2
LayerScatter channel_scatter_streaming(const Eigen::MatrixXd& features,
                                       std::span<const int> labels,
                                       int num_classes);

}  // namespace chanprune
