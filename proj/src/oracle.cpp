#include "chanprune/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "chanprune/traceratio.hpp"

namespace chanprune::oracle {
namespace {

double log_sum_exp(std::span<const double> raw, const IndexSet& indices) {
  double peak = -std::numeric_limits<double>::infinity();
  for (int i : indices) peak = std::max(peak, raw[i]);
  double sum = 0.0;
  for (int i : indices) sum += std::exp(raw[i] - peak);
  return peak + std::log(sum);
}

IndexSet bits_to_set(unsigned bits, int c) {
  IndexSet s;
  for (int i = 0; i < c; ++i) {
    if (bits & (1u << i)) s.push_back(i);
  }
  return s;
}

}  // namespace

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

BestSubset brute_force_best_subset(const LayerScatter& stats, int d) {
  const int c = stats.channels();
  if (d < 1 || d > c) {
    throw InvalidInput(fmt::format("d = {} outside [1, {}]", d, c));
  }
  if (binomial(c, d) > 1e6) {
    throw InvalidInput(fmt::format("C({}, {}) subsets is too many", c, d));
  }
  const double floor = denominator_floor(stats);
  BestSubset best;
  best.lambda = -std::numeric_limits<double>::infinity();
  for_each_subset(c, d, [&](const IndexSet& s) {
    double num = 0.0;
    double den = 0.0;
    for (int i : s) {
      num += stats.between[i];
      den += stats.within[i];
    }
    const double ratio = num / std::max(den, floor);
    // Strict comparison keeps the lexicographically first maximizer.
    if (ratio > best.lambda) {
      best.lambda = ratio;
      best.indices = s;
    }
  });
  return best;
}

SubmodularReport check_submodular_monotone(std::span<const double> raw,
                                           double slack) {
  const int c = static_cast<int>(raw.size());
  if (c > 8) throw InvalidInput("exhaustive submodularity check needs c <= 8");

  const unsigned full = (1u << c) - 1;
  std::vector<double> h(full + 1, -std::numeric_limits<double>::infinity());
  for (unsigned s = 1; s <= full; ++s) h[s] = log_sum_exp(raw, bits_to_set(s, c));

  SubmodularReport report;
  for (unsigned large = 1; large <= full; ++large) {
    // Nonempty subsets of `large`.
    for (unsigned small = large;; small = (small - 1) & large) {
      if (small == 0) break;
      for (int i = 0; i < c; ++i) {
        const unsigned bit = 1u << i;
        if (large & bit) continue;
        ++report.triples_checked;
        const double gain_small = h[small | bit] - h[small];
        const double gain_large = h[large | bit] - h[large];
        if (gain_small < gain_large - slack) {
          report.violations.push_back({bits_to_set(small, c),
                                       bits_to_set(large, c), i, "submodular",
                                       gain_large - gain_small});
        }
        if (h[small] > h[large] + slack) {
          report.violations.push_back({bits_to_set(small, c),
                                       bits_to_set(large, c), i, "monotone",
                                       h[small] - h[large]});
        }
      }
    }
  }
  return report;
}

GreedyBoundReport greedy_bound_check(std::span<const double> raw, int d) {
  const int c = static_cast<int>(raw.size());
  if (d < 1 || d > c) {
    throw InvalidInput(fmt::format("d = {} outside [1, {}]", d, c));
  }
  if (binomial(c, d) > 1e5) {
    throw InvalidInput(fmt::format("C({}, {}) subsets is too many", c, d));
  }

  // Sequential selection of the highest scores, lower index first on ties.
  IndexSet order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return raw[a] > raw[b]; });
  IndexSet top(order.begin(), order.begin() + d);
  std::sort(top.begin(), top.end());

  const double factor = 1.0 - 1.0 / std::exp(1.0);
  GreedyBoundReport report;
  report.top_value = log_sum_exp(raw, top);
  report.best_value = -std::numeric_limits<double>::infinity();
  report.min_margin = std::numeric_limits<double>::infinity();
  for_each_subset(c, d, [&](const IndexSet& s) {
    const double value = log_sum_exp(raw, s);
    report.best_value = std::max(report.best_value, value);
    report.min_margin =
        std::min(report.min_margin, report.top_value - factor * value);
    ++report.subsets_checked;
  });
  return report;
}

}  // namespace chanprune::oracle
