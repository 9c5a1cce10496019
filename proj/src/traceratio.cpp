#include "chanprune/traceratio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "chanprune/graph.hpp"

namespace chanprune {
namespace {

void check_count(int d, int channels) {
  if (d < 1 || d > channels) {
    throw InvalidInput(
        fmt::format("retained count {} outside [1, {}]", d, channels));
  }
}

void check_nonempty(const IndexSet& indices) {
  if (indices.empty()) throw InvalidInput("index set must be nonempty");
}

// Hard cap on reselection rounds; each round strictly raises lambda over a
// finite set of subsets, so this is never reached on sane input.
constexpr int kMaxRounds = 10000;

}  // namespace

double denominator_floor(const LayerScatter& stats) {
  double total = 0.0;
  for (double w : stats.within) total += w;
  return CriterionConstants::kDenominatorFloor * (1.0 + total);
}

std::vector<double> raw_scores(const LayerScatter& stats, double lambda) {
  std::vector<double> r(stats.between.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = raw_score(stats.between[i], stats.within[i], lambda);
  }
  return r;
}

double set_H(std::span<const double> raw, const IndexSet& indices) {
  check_nonempty(indices);
  double peak = -std::numeric_limits<double>::infinity();
  for (int i : indices) peak = std::max(peak, raw[i]);
  double sum = 0.0;
  for (int i : indices) sum += std::exp(raw[i] - peak);
  return peak + std::log(sum);
}

double lambda_of(const IndexSet& indices, const LayerScatter& stats) {
  check_nonempty(indices);
  double num = 0.0;
  double den = 0.0;
  for (int i : indices) {
    num += stats.between[i];
    den += stats.within[i];
  }
  return num / std::max(den, denominator_floor(stats));
}

IndexSet select_top_d(const LayerScatter& stats, double lambda, int d) {
  const int c = stats.channels();
  check_count(d, c);
  const auto r = raw_scores(stats, lambda);
  IndexSet order(c);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + d, order.end(),
                    [&](int a, int b) {
                      if (r[a] != r[b]) return r[a] > r[b];
                      return a < b;
                    });
  order.resize(d);
  std::sort(order.begin(), order.end());
  return order;
}

IndexSet random_subset(int channels, int d, std::uint64_t seed) {
  check_count(d, channels);
  std::mt19937_64 rng(seed);
  IndexSet pool(channels);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < d; ++i) {
    const auto span = static_cast<std::uint64_t>(channels - i);
    const int j = i + static_cast<int>(rng() % span);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(d);
  std::sort(pool.begin(), pool.end());
  return pool;
}

TraceRatioState fixed_point(const LayerScatter& stats, int d,
                            const IndexSet& init, double eps) {
  check_count(d, stats.channels());
  if (static_cast<int>(init.size()) != d) {
    throw InvalidInput(fmt::format("initial set has {} channels, expected {}",
                                   init.size(), d));
  }
  IndexSet current = LayerMask::from_indices(stats.channels(), init).indices();

  TraceRatioState state;
  double lambda = lambda_of(current, stats);
  state.lambda_history.push_back(lambda);

  while (state.iterations < kMaxRounds) {
    IndexSet next = select_top_d(stats, lambda, d);
    const double next_lambda = lambda_of(next, stats);
    ++state.iterations;

    if (next == current) {
      state.lambda_history.push_back(next_lambda);
      state.converged = true;
      break;
    }
    if (next_lambda - lambda <= eps * std::abs(lambda)) {
      // Keep whichever of the two sets has the larger ratio.
      if (next_lambda > lambda) {
        current = std::move(next);
        lambda = next_lambda;
      }
      state.lambda_history.push_back(lambda);
      state.converged = true;
      break;
    }
    current = std::move(next);
    lambda = next_lambda;
    state.lambda_history.push_back(lambda);
  }

  state.indices = std::move(current);
  state.lambda = lambda;
  return state;
}

TraceRatioState fixed_point(const LayerScatter& stats, int d,
                            std::uint64_t seed, double eps) {
  return fixed_point(stats, d, random_subset(stats.channels(), d, seed), eps);
}

std::uint64_t layer_seed(std::uint64_t seed, int layer) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(layer) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

PruneResult prune_network(FeatureProvider& provider,
                          std::span<const int> labels, int num_classes,
                          const NetSpec& spec, std::span<const int> kept,
                          double eps, std::uint64_t seed) {
  validate_netspec(spec);
  if (static_cast<int>(kept.size()) != spec.num_layers()) {
    throw InvalidInput(fmt::format("{} retained counts for {} layers",
                                   kept.size(), spec.num_layers()));
  }

  PruneResult result;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int c = spec.layers[l].channels;
    check_count(kept[l], c);

    FeatureBlock block = provider.layer_features(l, result.masks);
    if (block.channels != c ||
        block.samples != static_cast<int>(labels.size())) {
      throw InvalidInput(fmt::format(
          "layer {}: provider returned {} x {} features, expected {} x {}", l,
          block.samples, block.channels, labels.size(), c));
    }
    Eigen::MatrixXd pooled = spatial_aggregate(block);
    LayerScatter stats = channel_scatter_streaming(pooled, labels, num_classes);

    TraceRatioState state = fixed_point(stats, kept[l], layer_seed(seed, l), eps);
    state.layer = l;
    result.masks.push_back(LayerMask::from_indices(c, state.indices));
    result.states.push_back(std::move(state));
    result.scatter.push_back(std::move(stats));
  }
  return result;
}

}  // namespace chanprune
