#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "chanprune/core.hpp"

namespace chanprune {

/// Constants shared by the production selector and the exhaustive oracles so
/// their results are comparable exactly.
struct CriterionConstants {
  /// Denominator floor is this times (1 + sum of all within-class scatter).
  static constexpr double kDenominatorFloor = 1e-12;
  static constexpr double kDefaultEps = 1e-9;
};

/// Floor applied to sum_{i in I} w_i when forming the ratio.
double denominator_floor(const LayerScatter& stats);

/// Log of the channel discrimination score: b - lambda * w.
inline double raw_score(double between, double within, double lambda) {
  return between - lambda * within;
}

std::vector<double> raw_scores(const LayerScatter& stats, double lambda);

/// log(sum_{i in I} exp(r_i)), evaluated with a max shift. I must be nonempty.
double set_H(std::span<const double> raw, const IndexSet& indices);

/// Trace ratio of the subset: sum b / max(sum w, floor).
double lambda_of(const IndexSet& indices, const LayerScatter& stats);

/// The d channels with the largest raw score at `lambda`, lower index first on
/// ties, returned ascending.
IndexSet select_top_d(const LayerScatter& stats, double lambda, int d);

/// d distinct channels out of c drawn from a 64-bit Mersenne twister. Uses
/// only the engine's raw output so sequences agree across standard libraries.
IndexSet random_subset(int channels, int d, std::uint64_t seed);

struct TraceRatioState {
  int layer = 0;
  IndexSet indices;
  double lambda = 0.0;
  /// Ratio of the initial set followed by the ratio after every reselection.
  std::vector<double> lambda_history;
  int iterations = 0;
  bool converged = false;
};

/// Iterates top-d reselection at the current ratio until the set repeats or
/// the ratio gains no more than eps * |lambda|.
TraceRatioState fixed_point(const LayerScatter& stats, int d,
                            const IndexSet& init,
                            double eps = CriterionConstants::kDefaultEps);

/// As above, starting from a seeded random d-subset.
TraceRatioState fixed_point(const LayerScatter& stats, int d,
                            std::uint64_t seed,
                            double eps = CriterionConstants::kDefaultEps);

/// Supplies layer activations for the cascaded pass. `upstream` holds the
/// masks already chosen for layers [0, layer); those channels must be zeroed
/// before computing `layer`.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual FeatureBlock layer_features(int layer,
                                      std::span<const LayerMask> upstream) = 0;
};

struct PruneResult {
  ChannelMask masks;
  std::vector<TraceRatioState> states;
  /// Scatter each layer was pruned with, i.e. computed after upstream masking.
  ScatterStats scatter;
};

/// Layer-by-layer pruning: aggregate, scatter, fixed point, mask, and feed the
/// masked result into the next layer.
PruneResult prune_network(FeatureProvider& provider,
                          std::span<const int> labels, int num_classes,
                          const NetSpec& spec, std::span<const int> kept,
                          double eps, std::uint64_t seed);

/// Per-layer seed derived from the run seed.
std::uint64_t layer_seed(std::uint64_t seed, int layer);

}  // namespace chanprune
