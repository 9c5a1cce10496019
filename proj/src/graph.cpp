#include "chanprune/graph.hpp"

#include <fmt/format.h>

namespace chanprune {
namespace {

std::vector<int> count_classes(std::span<const int> labels, int num_classes) {
  if (num_classes < 1) throw InvalidInput("num_classes must be >= 1");
  std::vector<int> counts(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i];
    if (y < 0 || y >= num_classes) {
      throw InvalidInput(fmt::format("label {} at sample {} outside [0, {})", y,
                                     i, num_classes));
    }
    ++counts[y];
  }
  return counts;
}

}  // namespace

ClassGraphs build_class_graphs(std::span<const int> labels, int num_classes) {
  ClassGraphs g;
  g.class_counts = count_classes(labels, num_classes);
  for (int k = 0; k < num_classes; ++k) {
    if (g.class_counts[k] == 0) {
      throw InvalidInput(fmt::format("class {} has no samples", k));
    }
  }

  const auto n = static_cast<Eigen::Index>(labels.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  g.within = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (labels[i] == labels[j]) {
        g.within(i, j) = 1.0 / g.class_counts[labels[i]];
      }
    }
  }
  g.between = Eigen::MatrixXd::Constant(n, n, inv_n) - g.within;

  auto laplacian = [](const Eigen::MatrixXd& adj) {
    Eigen::MatrixXd lap = -adj;
    for (Eigen::Index i = 0; i < adj.rows(); ++i) {
      double degree = 0.0;
      for (Eigen::Index j = 0; j < adj.cols(); ++j) degree += adj(i, j);
      lap(i, i) += degree;
    }
    return lap;
  };
  g.within_laplacian = laplacian(g.within);
  g.between_laplacian = laplacian(g.between);
  return g;
}

Eigen::MatrixXd spatial_aggregate(const FeatureBlock& block) {
  const std::size_t expected = static_cast<std::size_t>(block.samples) *
                               block.channels * block.height * block.width;
  if (block.values.size() != expected) {
    throw InvalidInput(fmt::format("feature block holds {} values, expected {}",
                                   block.values.size(), expected));
  }
  Eigen::MatrixXd out(block.channels, block.samples);
  const double area = static_cast<double>(block.height) * block.width;
  for (int n = 0; n < block.samples; ++n) {
    for (int c = 0; c < block.channels; ++c) {
      const double* p = &block.values[block.offset(n, c, 0, 0)];
      double sum = 0.0;
      for (int s = 0; s < block.height * block.width; ++s) sum += p[s];
      out(c, n) = sum / area;
    }
  }
  return out;
}

LayerScatter channel_scatter_dense(const Eigen::MatrixXd& features,
                                   const ClassGraphs& graphs) {
  if (features.cols() != graphs.within.rows()) {
    throw InvalidInput(fmt::format("features have {} samples, graphs {}",
                                   features.cols(), graphs.within.rows()));
  }
  const Eigen::Index c = features.rows();
  LayerScatter out;
  out.between.resize(c);
  out.within.resize(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    Eigen::VectorXd o = features.row(i).transpose();
    out.between[i] = o.dot(graphs.between_laplacian * o);
    out.within[i] = o.dot(graphs.within_laplacian * o);
  }
  return out;
}

LayerScatter channel_scatter_streaming(const Eigen::MatrixXd& features,
                                       std::span<const int> labels,
                                       int num_classes) {
  if (features.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw InvalidInput(fmt::format("features have {} samples, labels {}",
                                   features.cols(), labels.size()));
  }
  const auto counts = count_classes(labels, num_classes);
  const Eigen::Index c = features.rows();
  const Eigen::Index n = features.cols();

  LayerScatter out;
  out.between.assign(c, 0.0);
  out.within.assign(c, 0.0);
  std::vector<double> class_mean(num_classes);
  for (Eigen::Index i = 0; i < c; ++i) {
    std::fill(class_mean.begin(), class_mean.end(), 0.0);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      class_mean[labels[j]] += features(i, j);
      total += features(i, j);
    }
    const double mean = total / static_cast<double>(n);
    for (int k = 0; k < num_classes; ++k) {
      if (counts[k] > 0) class_mean[k] /= counts[k];
    }

    double within = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double r = features(i, j) - class_mean[labels[j]];
      within += r * r;
    }
    double between = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      const double r = class_mean[k] - mean;
      between += counts[k] * r * r;
    }
    out.between[i] = between;
    out.within[i] = within;
  }
  return out;
}

}  // namespace chanprune
