#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "chanprune/core.hpp"
#include "chanprune/traceratio.hpp"

namespace chanprune {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// A chain of rectified dense layers followed by a linear classifier. Each
/// hidden layer is modelled as a 1x1 convolution on a 1x1 feature map.
struct ToyNet {
  std::vector<DenseLayer> hidden;
  DenseLayer classifier;

  int input_dim() const;
  int num_classes() const { return static_cast<int>(classifier.weight.rows()); }
  std::vector<int> widths() const;
  std::size_t parameter_count() const;
  /// FLOPs description of the hidden chain (h = w = q = 1).
  NetSpec spec() const;
};

/// Throws InvalidInput unless shapes chain and every parameter is finite.
void validate_toynet(const ToyNet& net);

/// He-normal weights, zero biases.
ToyNet make_toynet(int input_dim, std::span<const int> widths, int num_classes,
                   std::uint64_t seed);

struct SyntheticSpec {
  int num_classes = 10;
  int samples = 2000;
  int input_dim = 16;
  double mean_scale = 1.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters around per-class means drawn from `seed`.
/// Labels cycle 0..K-1 so classes are balanced to within one sample.
/// `stream` selects an independent noise draw around the same means, which
/// gives held-out data for the same task.
LabeledBatch gen_synthetic(const SyntheticSpec& spec, std::uint64_t stream = 0);

/// As gen_synthetic with explicit class means (K x p).
LabeledBatch gen_synthetic(const Eigen::MatrixXd& means, int samples,
                           double noise_scale, std::uint64_t seed);

struct ForwardResult {
  std::vector<Eigen::MatrixXd> hidden;  // c_l x N, post-activation
  Eigen::MatrixXd logits;               // K x N
};

/// Runs the net on N x p samples. masks[l], when present, zeroes the dropped
/// channels of hidden layer l after its activation; layers past masks.size()
/// are left intact.
ForwardResult forward_features(const ToyNet& net, const Eigen::MatrixXd& samples,
                               std::span<const LayerMask> masks = {});

/// Mean softmax cross-entropy.
double loss(const ToyNet& net, const LabeledBatch& batch);

/// Gradient of loss() in the same shape as the net.
ToyNet gradient(const ToyNet& net, const LabeledBatch& batch,
                double* loss_out = nullptr);

std::vector<double> flatten(const ToyNet& net);
void unflatten(ToyNet& net, std::span<const double> params);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 200;
  double lr = 0.1;
};

/// Full-batch gradient descent. Appends the loss before each step to
/// `losses` when given. Throws TrainingDiverged on a non-finite loss.
ToyNet train(ToyNet net, const LabeledBatch& data, const TrainConfig& config,
             std::vector<double>* losses = nullptr);

/// Physically removes dropped channels: layer l keeps rows I_l and columns
/// I_{l-1}; the classifier keeps columns I_L.
ToyNet apply_masks(const ToyNet& net, std::span<const LayerMask> masks);

/// Fraction of columns whose argmax (lowest class on ties) equals the label.
double accuracy_from_logits(const Eigen::MatrixXd& logits,
                            std::span<const int> labels);
double evaluate(const ToyNet& net, const LabeledBatch& batch);

/// Feature source for the cascaded pruning pass.
class ToyNetFeatures : public FeatureProvider {
 public:
  ToyNetFeatures(const ToyNet& net, const Eigen::MatrixXd& samples)
      : net_(net), samples_(samples) {}

  FeatureBlock layer_features(int layer,
                              std::span<const LayerMask> upstream) override;

 private:
  const ToyNet& net_;
  const Eigen::MatrixXd& samples_;
};

/// Packs a c x N activation matrix as an N x c x 1 x 1 block.
FeatureBlock to_block(const Eigen::MatrixXd& activations);

/// Writes `<path>` (JSON shapes) and `<path stem>.bin` (little-endian f64
/// parameters in flatten() order).
void save_toynet(const ToyNet& net, const std::filesystem::path& path);
ToyNet load_toynet(const std::filesystem::path& path);

}  // namespace chanprune
