#include "chanprune/archsearch.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

namespace chanprune {
namespace {

double layer_area(const LayerDesc& layer) {
  return static_cast<double>(layer.width) * layer.height * layer.kernel *
         layer.kernel;
}

std::vector<double> sorted_desc(std::vector<double> scores) {
  std::sort(scores.begin(), scores.end(), std::greater<>());
  return scores;
}

}  // namespace

double layer_flops(double d_prev, double d, const LayerDesc& layer) {
  return d_prev * d * layer_area(layer);
}

double total_flops(std::span<const int> kept, const NetSpec& spec) {
  if (static_cast<int>(kept.size()) != spec.num_layers()) {
    throw InvalidInput(fmt::format("{} channel counts for {} layers",
                                   kept.size(), spec.num_layers()));
  }
  double total = 0.0;
  double prev = spec.input_channels;
  for (int l = 0; l < spec.num_layers(); ++l) {
    total += layer_flops(prev, kept[l], spec.layers[l]);
    prev = kept[l];
  }
  return total;
}

double dD_dd(std::span<const double> sorted_raw_desc, int d) {
  const int c = static_cast<int>(sorted_raw_desc.size());
  if (d < 1) throw InvalidInput("dD_dd needs d >= 1");
  if (d >= c) return 0.0;
  const double top = sorted_raw_desc[0];
  double sum = 0.0;
  for (int i = 0; i < d; ++i) sum += std::exp(sorted_raw_desc[i] - top);
  return std::exp(sorted_raw_desc[d] - top) / sum;
}

double dT_dd(std::span<const int> kept, int layer, const NetSpec& spec,
             int num_classes) {
  const int L = spec.num_layers();
  if (layer < 0 || layer >= L) {
    throw InvalidInput(fmt::format("layer {} outside [0, {})", layer, L));
  }
  const double prev = layer == 0 ? spec.input_channels : kept[layer - 1];
  double fan_in = prev * layer_area(spec.layers[layer]);
  double fan_out = layer + 1 < L
                       ? kept[layer + 1] * layer_area(spec.layers[layer + 1])
                       : static_cast<double>(num_classes);
  return fan_in + fan_out;
}

double gamma(int layer, const ArchState& state, const NetSpec& spec,
             int num_classes, int eta) {
  if (state.kept[layer] + eta > state.caps[layer]) return kSaturated;
  return dD_dd(state.sorted_scores[layer], state.kept[layer]) /
         dT_dd(state.kept, layer, spec, num_classes);
}

std::vector<int> layer_caps(const NetSpec& spec, const SearchConfig& config) {
  std::vector<int> caps;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int c = spec.layers[l].channels;
    if (l == 0 && config.pin_first_layer) {
      caps.push_back(c);
      continue;
    }
    const int cap = static_cast<int>(std::floor(config.cap_frac * c + 1e-9));
    caps.push_back(std::clamp(cap, 0, c));
  }
  return caps;
}

ArchState greedy_search(const ScatterStats& stats, const NetSpec& spec,
                        const SearchConfig& config) {
  validate_netspec(spec);
  const int L = spec.num_layers();
  if (static_cast<int>(stats.size()) != L) {
    throw InvalidInput(
        fmt::format("scatter for {} layers, spec has {}", stats.size(), L));
  }
  if (config.d_min < 1) throw InvalidInput("d_min must be >= 1");
  if (config.eta < 1) throw InvalidInput("eta must be >= 1");
  if (!(config.cap_frac > 0.0 && config.cap_frac <= 1.0)) {
    throw InvalidInput("cap fraction must lie in (0, 1]");
  }

  ArchState state;
  state.caps = layer_caps(spec, config);
  for (int l = 0; l < L; ++l) {
    if (stats[l].channels() != spec.layers[l].channels) {
      throw InvalidInput(fmt::format("layer {}: scatter has {} channels, spec {}",
                                     l, stats[l].channels(),
                                     spec.layers[l].channels));
    }
    const bool pinned = l == 0 && config.pin_first_layer;
    if (!pinned && state.caps[l] < config.d_min) {
      throw InvalidInput(fmt::format("layer {}: cap {} below d_min {}", l,
                                     state.caps[l], config.d_min));
    }
    const int d = pinned ? spec.layers[l].channels : config.d_min;
    IndexSet init = random_subset(spec.layers[l].channels, d,
                                  layer_seed(config.seed, l));
    const double lambda = lambda_of(init, stats[l]);
    state.kept.push_back(d);
    state.lambdas.push_back(lambda);
    state.sorted_scores.push_back(sorted_desc(raw_scores(stats[l], lambda)));
    state.index_sets.push_back(std::move(init));
  }

  const double start = total_flops(state.kept, spec);
  if (start > config.budget) {
    throw InfeasibleBudget(
        fmt::format("budget below minimum architecture ({} > {})", start,
                    config.budget));
  }

  state.gamma.resize(L);
  for (int l = 0; l < L; ++l) {
    state.gamma[l] = gamma(l, state, spec, config.num_classes, config.eta);
  }

  while (true) {
    const auto best = std::max_element(state.gamma.begin(), state.gamma.end());
    const int grow = static_cast<int>(best - state.gamma.begin());
    if (*best == kSaturated) break;

    std::vector<int> trial = state.kept;
    trial[grow] += config.eta;
    if (total_flops(trial, spec) > config.budget) break;

    state.kept = std::move(trial);
    const int d = state.kept[grow];
    const IndexSet seed_set = select_top_d(stats[grow], state.lambdas[grow], d);
    TraceRatioState refreshed =
        fixed_point(stats[grow], d, seed_set, config.eps);
    state.lambdas[grow] = refreshed.lambda;
    state.index_sets[grow] = std::move(refreshed.indices);
    state.sorted_scores[grow] =
        sorted_desc(raw_scores(stats[grow], refreshed.lambda));

    // Only the grown layer and its two neighbours see a different dT.
    for (int l = std::max(0, grow - 1); l <= std::min(L - 1, grow + 1); ++l) {
      state.gamma[l] = gamma(l, state, spec, config.num_classes, config.eta);
    }
    ++state.iterations;
    state.growth_order.push_back(grow);
    if (config.on_step) config.on_step(state);
  }
  return state;
}

}  // namespace chanprune
