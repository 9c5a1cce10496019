#include "chanprune/core.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace chanprune {

std::vector<int> LabeledBatch::class_counts() const {
  std::vector<int> counts(num_classes, 0);
  for (int y : labels) ++counts[y];
  return counts;
}

bool LabeledBatch::operator==(const LabeledBatch& other) const {
  if (samples.rows() != other.samples.rows() ||
      samples.cols() != other.samples.cols()) {
    return false;
  }
  return samples == other.samples && labels == other.labels &&
         num_classes == other.num_classes && class_ids == other.class_ids &&
         class_filter == other.class_filter;
}

LabeledBatch make_batch(Eigen::MatrixXd samples, std::vector<int> labels,
                        int num_classes) {
  if (samples.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw InvalidInput(fmt::format("{} samples but {} labels", samples.rows(),
                                   labels.size()));
  }
  if (labels.size() < 2) throw InvalidInput("N >= 2 required");
  if (num_classes < 2) throw InvalidInput("K >= 2 required");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InvalidInput(fmt::format("label {} at sample {} outside [0, {})",
                                     labels[i], i, num_classes));
    }
  }
  LabeledBatch batch;
  batch.samples = std::move(samples);
  batch.labels = std::move(labels);
  batch.num_classes = num_classes;
  batch.class_ids.resize(num_classes);
  for (int k = 0; k < num_classes; ++k) batch.class_ids[k] = k;
  return batch;
}

LabeledBatch filter_classes(const LabeledBatch& batch,
                            std::span<const int> subset) {
  if (subset.empty()) throw InvalidInput("class subset is empty");

  std::vector<int> wanted(subset.begin(), subset.end());
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  // original id -> new dense label
  std::vector<int> remap(batch.num_classes, -1);
  for (std::size_t j = 0; j < wanted.size(); ++j) {
    auto it = std::find(batch.class_ids.begin(), batch.class_ids.end(),
                        wanted[j]);
    if (it == batch.class_ids.end()) {
      throw InvalidInput(fmt::format("class id {} not present", wanted[j]));
    }
    remap[it - batch.class_ids.begin()] = static_cast<int>(j);
  }
  if (wanted.size() < 2) {
    throw InvalidInput("K >= 2 required after filtering");
  }

  std::vector<int> rows;
  for (int i = 0; i < batch.size(); ++i) {
    if (remap[batch.labels[i]] >= 0) rows.push_back(i);
  }
  if (rows.empty()) throw InvalidInput("no samples left after filtering");

  LabeledBatch out;
  out.samples.resize(static_cast<Eigen::Index>(rows.size()),
                     batch.samples.cols());
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.samples.row(static_cast<Eigen::Index>(r)) = batch.samples.row(rows[r]);
    out.labels.push_back(remap[batch.labels[rows[r]]]);
  }
  out.num_classes = static_cast<int>(wanted.size());
  out.class_ids = wanted;
  out.class_filter = wanted;

  auto counts = out.class_counts();
  for (int k = 0; k < out.num_classes; ++k) {
    if (counts[k] < 2) {
      throw InvalidInput(fmt::format(
          "class {} has {} samples after filtering, need >= 2", wanted[k],
          counts[k]));
    }
  }
  return out;
}

std::vector<int> NetSpec::channels() const {
  std::vector<int> c;
  c.reserve(layers.size());
  for (const auto& layer : layers) c.push_back(layer.channels);
  return c;
}

const NetSpec& validate_netspec(const NetSpec& spec) {
  if (spec.layers.empty()) throw InvalidInput("L ≥ 1 required");
  if (spec.input_channels < 1) {
    throw InvalidInput("input channels must be ≥ 1");
  }
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    if (layer.channels < 1) {
      throw InvalidInput(fmt::format("layer {}: channels must be ≥ 1", l));
    }
    if (layer.kernel < 1) {
      throw InvalidInput(fmt::format("layer {}: kernel must be ≥ 1", l));
    }
    if (layer.height < 1 || layer.width < 1) {
      throw InvalidInput(
          fmt::format("layer {}: height and width must be ≥ 1", l));
    }
  }
  return spec;
}

LayerMask LayerMask::from_indices(int channels, IndexSet indices) {
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw InvalidInput("duplicate channel index in mask");
  }
  LayerMask mask;
  mask.bits_.assign(channels, 0);
  for (int i : indices) {
    if (i < 0 || i >= channels) {
      throw InvalidInput(
          fmt::format("channel index {} outside [0, {})", i, channels));
    }
    mask.bits_[i] = 1;
  }
  mask.indices_ = std::move(indices);
  return mask;
}

LayerMask LayerMask::all(int channels) {
  IndexSet indices(channels);
  for (int i = 0; i < channels; ++i) indices[i] = i;
  return from_indices(channels, std::move(indices));
}

void validate_scatter(const LayerScatter& stats) {
  if (stats.between.size() != stats.within.size()) {
    throw InvalidInput("between/within scatter length mismatch");
  }
  for (std::size_t i = 0; i < stats.between.size(); ++i) {
    if (!(stats.between[i] >= -1e-9) || !(stats.within[i] >= -1e-9)) {
      throw InvalidInput(fmt::format(
          "channel {}: scatter must be non-negative (b={}, w={})", i,
          stats.between[i], stats.within[i]));
    }
  }
}

void validate_plan(const PrunePlan& plan) {
  if (plan.layers.empty()) throw InvalidInput("plan has no layers");
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& layer = plan.layers[l];
    if (static_cast<int>(layer.retained.size()) != layer.kept) {
      throw InvalidInput(
          fmt::format("layer {}: |retained| != d ({} vs {})", l,
                      layer.retained.size(), layer.kept));
    }
    if (layer.kept > layer.channels ||
        layer.kept < std::min(plan.config.d_min, layer.channels)) {
      throw InvalidInput(fmt::format("layer {}: d = {} outside [{}, {}]", l,
                                     layer.kept, plan.config.d_min,
                                     layer.channels));
    }
    for (std::size_t i = 0; i < layer.retained.size(); ++i) {
      int idx = layer.retained[i];
      if (idx < 0 || idx >= layer.channels ||
          (i > 0 && idx <= layer.retained[i - 1])) {
        throw InvalidInput(fmt::format(
            "layer {}: retained indices must be sorted, unique, in range", l));
      }
    }
    const auto& hist = layer.lambda_history;
    for (std::size_t t = 1; t < hist.size(); ++t) {
      if (hist[t] < hist[t - 1] - 1e-12 * (1.0 + std::abs(hist[t - 1]))) {
        throw InvalidInput(
            fmt::format("layer {}: lambda history decreases at step {}", l, t));
      }
    }
  }
  if (plan.flops_pruned > plan.flops_budget) {
    throw InvalidInput(fmt::format("pruned FLOPs {} exceed budget {}",
                                   plan.flops_pruned, plan.flops_budget));
  }
}

}  // namespace chanprune
