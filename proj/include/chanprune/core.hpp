#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace chanprune {

/// Raised when an input violates a documented invariant.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a file cannot be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sorted ascending list of retained channel indices.
using IndexSet = std::vector<int>;

/// Samples with dense class labels.
///
/// `labels` are always dense in [0, num_classes). `class_ids` maps each dense
/// label back to the id it had in the unfiltered data, so filtering by
/// original ids stays well-defined after re-indexing.
struct LabeledBatch {
  Eigen::MatrixXd samples;  // N x p
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<int> class_ids;
  std::optional<std::vector<int>> class_filter;

  int size() const { return static_cast<int>(labels.size()); }
  std::vector<int> class_counts() const;

  bool operator==(const LabeledBatch& other) const;
};

/// Builds a batch with identity class ids, checking labels, N >= 2 and K >= 2.
LabeledBatch make_batch(Eigen::MatrixXd samples, std::vector<int> labels,
                        int num_classes);

/// Keeps only samples whose original class id is in `subset` and re-indexes
/// labels by ascending original id. Every surviving class needs >= 2 samples.
LabeledBatch filter_classes(const LabeledBatch& batch,
                            std::span<const int> subset);

struct LayerDesc {
  std::string name;
  int channels = 0;
  int height = 1;
  int width = 1;
  int kernel = 1;

  bool operator==(const LayerDesc&) const = default;
};

struct NetSpec {
  std::vector<LayerDesc> layers;
  int input_channels = 0;

  int num_layers() const { return static_cast<int>(layers.size()); }
  std::vector<int> channels() const;

  bool operator==(const NetSpec&) const = default;
};

/// Returns `spec` if every layer is well-formed; otherwise throws
/// InvalidInput naming the first offending layer.
const NetSpec& validate_netspec(const NetSpec& spec);

/// One layer's keep-mask. The index list is canonical; `bits` mirrors it.
class LayerMask {
 public:
  LayerMask() = default;
  static LayerMask from_indices(int channels, IndexSet indices);
  static LayerMask all(int channels);

  int channels() const { return static_cast<int>(bits_.size()); }
  int kept() const { return static_cast<int>(indices_.size()); }
  const IndexSet& indices() const { return indices_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool keeps(int channel) const { return bits_[channel] != 0; }

  bool operator==(const LayerMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  IndexSet indices_;
};

using ChannelMask = std::vector<LayerMask>;

/// Per-channel diagonal of the between-/within-class scatter of one layer.
struct LayerScatter {
  std::vector<double> between;
  std::vector<double> within;

  int channels() const { return static_cast<int>(between.size()); }
};

using ScatterStats = std::vector<LayerScatter>;

/// Throws unless both vectors have equal length and are >= -1e-9.
void validate_scatter(const LayerScatter& stats);

/// Activations of one layer for a batch, stored sample-major [n][c][h][w].
struct FeatureBlock {
  int samples = 0;
  int channels = 0;
  int height = 1;
  int width = 1;
  std::vector<double> values;

  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * channels + c) * height + y) * width +
           x;
  }
  double at(int n, int c, int y, int x) const {
    return values[offset(n, c, y, x)];
  }
};

struct PlanLayer {
  std::string name;
  int channels = 0;
  int kept = 0;
  IndexSet retained;
  std::vector<double> lambda_history;
  int iterations = 0;
  double flops = 0.0;

  bool operator==(const PlanLayer&) const = default;
};

struct PlanConfig {
  int d_min = 3;
  int eta = 1;
  double eps = 1e-9;
  std::uint64_t seed = 0;
  double cap_frac = 1.0;
  std::optional<std::vector<int>> class_filter;
  bool pin_first_layer = true;

  bool operator==(const PlanConfig&) const = default;
};

/// Result of a full pruning run: per-layer counts, kept channels, and the
/// FLOPs accounting against the budget.
struct PrunePlan {
  std::vector<PlanLayer> layers;
  double flops_original = 0.0;
  double flops_pruned = 0.0;
  double flops_budget = 0.0;
  int search_iterations = 0;
  PlanConfig config;

  bool operator==(const PrunePlan&) const = default;
};

/// Checks |I_l| = d_l, sorted unique indices, d_min <= d_l <= c_l and the
/// budget. Throws InvalidInput on the first violation.
void validate_plan(const PrunePlan& plan);

}  // namespace chanprune
