#include "chanprune/pipeline.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "chanprune/graph.hpp"

namespace chanprune {

FeatureBlock StaticFeatures::layer_features(int layer,
                                            std::span<const LayerMask>) {
  if (layer < 0 || layer >= static_cast<int>(blocks_.size())) {
    throw InvalidInput(fmt::format("no features for layer {}", layer));
  }
  return blocks_[layer];
}

std::vector<int> rows_in_classes(std::span<const int> labels,
                                 std::span<const int> subset) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::find(subset.begin(), subset.end(), labels[i]) != subset.end()) {
      rows.push_back(static_cast<int>(i));
    }
  }
  return rows;
}

FeatureBlock select_samples(const FeatureBlock& block,
                            std::span<const int> rows) {
  FeatureBlock out = block;
  out.samples = static_cast<int>(rows.size());
  const std::size_t stride =
      static_cast<std::size_t>(block.channels) * block.height * block.width;
  out.values.resize(rows.size() * stride);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(block.values.begin() + rows[r] * stride, stride,
                out.values.begin() + r * stride);
  }
  return out;
}

PipelineResult run_pipeline(const NetSpec& spec,
                            std::span<const Eigen::MatrixXd> pooled,
                            std::span<const int> labels, int num_classes,
                            FeatureProvider& provider,
                            const PipelineOptions& options) {
  validate_netspec(spec);
  if (static_cast<int>(pooled.size()) != spec.num_layers()) {
    throw InvalidInput("one feature matrix per layer required");
  }
  if (options.budget_flops.has_value() == options.budget_frac.has_value()) {
    throw InvalidInput("exactly one of budget_flops and budget_frac required");
  }
  const auto& cfg = options.config;

  ScatterStats stats;
  for (const auto& features : pooled) {
    stats.push_back(channel_scatter_streaming(features, labels, num_classes));
  }

  const double original = total_flops(spec.channels(), spec);
  double budget = 0.0;
  if (options.budget_frac) {
    const double frac = *options.budget_frac;
    if (!(frac > 0.0 && frac <= 1.0)) {
      throw InvalidInput("budget fraction must lie in (0, 1]");
    }
    budget = frac * original;
  } else {
    budget = *options.budget_flops;
    if (!(budget > 0.0)) throw InvalidInput("FLOPs budget must be positive");
  }

  SearchConfig search;
  search.d_min = cfg.d_min;
  search.eta = cfg.eta;
  search.budget = budget;
  search.cap_frac = cfg.cap_frac;
  search.pin_first_layer = cfg.pin_first_layer;
  search.eps = cfg.eps;
  search.seed = cfg.seed;
  search.num_classes = num_classes;

  PipelineResult result;
  result.search = greedy_search(stats, spec, search);

  result.pruning = prune_network(provider, labels, num_classes, spec,
                                 result.search.kept, cfg.eps, cfg.seed);

  PrunePlan& plan = result.plan;
  plan.config = cfg;
  plan.flops_original = original;
  plan.flops_budget = budget;
  plan.flops_pruned = total_flops(result.search.kept, spec);
  plan.search_iterations = result.search.iterations;
  double prev = spec.input_channels;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto& state = result.pruning.states[l];
    PlanLayer layer;
    layer.name = spec.layers[l].name;
    layer.channels = spec.layers[l].channels;
    layer.kept = result.search.kept[l];
    layer.retained = state.indices;
    layer.lambda_history = state.lambda_history;
    layer.iterations = state.iterations;
    layer.flops = layer_flops(prev, layer.kept, spec.layers[l]);
    prev = layer.kept;
    plan.layers.push_back(std::move(layer));
  }
  validate_plan(plan);
  return result;
}

ToyConfig default_toy_config(std::uint64_t seed) {
  ToyConfig config;
  config.data.seed = seed;
  config.net_seed = seed;
  return config;
}

ToyTask make_toy_task(const ToyConfig& config) {
  ToyTask task;
  task.config = config;
  task.train = gen_synthetic(config.data, 0);
  SyntheticSpec held_out = config.data;
  held_out.samples = config.test_samples;
  task.test = gen_synthetic(held_out, 1);
  ToyNet net = make_toynet(config.data.input_dim, config.widths,
                           config.data.num_classes, config.net_seed);
  task.net = train(std::move(net), task.train, config.train);
  return task;
}

PipelineResult prune_toy(const ToyNet& net, const LabeledBatch& batch,
                         const PipelineOptions& options) {
  ForwardResult forward = forward_features(net, batch.samples);
  ToyNetFeatures provider(net, batch.samples);
  return run_pipeline(net.spec(), forward.hidden, batch.labels,
                      batch.num_classes, provider, options);
}

}  // namespace chanprune
