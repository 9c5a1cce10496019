#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "chanprune/archsearch.hpp"
#include "chanprune/core.hpp"
#include "chanprune/toynet.hpp"
#include "chanprune/traceratio.hpp"

namespace chanprune {

struct PipelineOptions {
  /// Exactly one of the two budgets must be set.
  std::optional<double> budget_flops;
  std::optional<double> budget_frac;
  PlanConfig config;
};

struct PipelineResult {
  PrunePlan plan;
  ArchState search;
  PruneResult pruning;
};

/// Channel-count search on the unpruned features, then cascaded selection.
///
/// `pooled` holds each layer's c_l x N unpruned features for the samples of
/// `labels`; `provider` serves the cascaded pass over the same samples.
PipelineResult run_pipeline(const NetSpec& spec,
                            std::span<const Eigen::MatrixXd> pooled,
                            std::span<const int> labels, int num_classes,
                            FeatureProvider& provider,
                            const PipelineOptions& options);

/// Serves fixed feature blocks, e.g. from a dump; upstream masks are ignored
/// because there is no network to recompute them.
class StaticFeatures : public FeatureProvider {
 public:
  explicit StaticFeatures(std::vector<FeatureBlock> blocks)
      : blocks_(std::move(blocks)) {}
  FeatureBlock layer_features(int layer,
                              std::span<const LayerMask> upstream) override;

 private:
  std::vector<FeatureBlock> blocks_;
};

/// Samples whose label is in the original-id subset, in order.
std::vector<int> rows_in_classes(std::span<const int> labels,
                                 std::span<const int> subset);
FeatureBlock select_samples(const FeatureBlock& block, std::span<const int> rows);

/// The built-in end-to-end task.
struct ToyConfig {
  SyntheticSpec data;
  int test_samples = 1000;
  std::vector<int> widths{16, 32, 32};
  TrainConfig train{200, 0.1};
  /// Fine-tuning runs at a tenth of the training rate.
  TrainConfig finetune{100, 0.01};
  std::uint64_t net_seed = 0;
};

ToyConfig default_toy_config(std::uint64_t seed);

struct ToyTask {
  ToyConfig config;
  LabeledBatch train;
  LabeledBatch test;
  ToyNet net;  // trained
};

ToyTask make_toy_task(const ToyConfig& config);

/// Runs the pipeline on the toy net over `batch`.
PipelineResult prune_toy(const ToyNet& net, const LabeledBatch& batch,
                         const PipelineOptions& options);

}  // namespace chanprune
