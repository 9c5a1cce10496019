#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "chanprune/core.hpp"
#include "chanprune/traceratio.hpp"

namespace chanprune {

/// Multiply-accumulates of one layer: d_prev * d * w * h * q^2.
double layer_flops(double d_prev, double d, const LayerDesc& layer);

/// Sum of layer_flops over the chain, with d_0 = spec.input_channels.
double total_flops(std::span<const int> kept, const NetSpec& spec);

/// Marginal discrimination gain of growing a layer from d to d + 1 channels,
/// s_(d+1) / sum_{i<=d} s_(i), over descending raw scores. 0 once d >= c.
double dD_dd(std::span<const double> sorted_raw_desc, int d);

/// Partial derivative of total FLOPs in d_l. The last layer's fan-out is the
/// classifier head, charged as a 1x1 layer with num_classes outputs.
double dT_dd(std::span<const int> kept, int layer, const NetSpec& spec,
             int num_classes);

/// The FLOPs budget cannot hold even the minimum architecture.
class InfeasibleBudget : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

constexpr double kSaturated = -std::numeric_limits<double>::infinity();

struct ArchState {
  std::vector<int> kept;
  std::vector<int> caps;
  std::vector<double> lambdas;
  std::vector<IndexSet> index_sets;
  std::vector<std::vector<double>> sorted_scores;  // descending raw scores
  std::vector<double> gamma;
  int iterations = 0;
  /// Layer grown at each accepted step.
  std::vector<int> growth_order;
};

/// Discrimination gain per FLOP of one more channel in `layer`, or kSaturated
/// when the layer cannot take another step of size eta.
double gamma(int layer, const ArchState& state, const NetSpec& spec,
             int num_classes, int eta);

struct SearchConfig {
  int d_min = 3;
  int eta = 1;
  double budget = 0.0;
  double cap_frac = 1.0;
  bool pin_first_layer = true;
  double eps = CriterionConstants::kDefaultEps;
  std::uint64_t seed = 0;
  int num_classes = 2;
  /// Called after every accepted growth step.
  std::function<void(const ArchState&)> on_step;
};

/// Per-layer maximum channel count: floor(cap_frac * c_l), clamped to c_l.
/// A pinned first layer is capped (and fixed) at c_1.
std::vector<int> layer_caps(const NetSpec& spec, const SearchConfig& config);

/// Greedy coordinate ascent on channel counts under the FLOPs budget.
///
/// Starts every free layer at d_min with a random subset, then repeatedly
/// grows the layer with the largest gamma by eta while the full FLOPs total
/// stays within budget. The grown layer's subset and ratio are refreshed by
/// the fixed-point selector; the others keep their ratio.
ArchState greedy_search(const ScatterStats& stats, const NetSpec& spec,
                        const SearchConfig& config);

}  // namespace chanprune
