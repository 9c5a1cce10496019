#pragma once

#include <span>
#include <string>
#include <vector>

#include "chanprune/core.hpp"

// Exhaustive reference checks. These enumerate subsets directly and never call
// the selector they are used to validate.
namespace chanprune::oracle {

struct BestSubset {
  IndexSet indices;
  double lambda = 0.0;
};

/// Maximum trace ratio over all d-subsets, lexicographically smallest set on
/// ties. Throws InvalidInput when C(c, d) exceeds 1e6.
BestSubset brute_force_best_subset(const LayerScatter& stats, int d);

struct SubmodularViolation {
  IndexSet smaller;
  IndexSet larger;
  int added = -1;
  std::string kind;  // "submodular" or "monotone"
  double excess = 0.0;
};

struct SubmodularReport {
  long long triples_checked = 0;
  std::vector<SubmodularViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks diminishing returns and monotonicity of H over every nonempty
/// S1 subset of S2 and i outside S2. Requires c <= 8.
SubmodularReport check_submodular_monotone(std::span<const double> raw,
                                           double slack = 1e-12);

struct GreedyBoundReport {
  double top_value = 0.0;   // H(top-d)
  double best_value = 0.0;  // max over d-subsets of H(S)
  /// min over S of H(top-d) - (1 - 1/e) H(S), in signed arithmetic.
  double min_margin = 0.0;
  long long subsets_checked = 0;
};

/// Compares the top-d selection against every d-subset. Requires
/// C(c, d) <= 1e5.
GreedyBoundReport greedy_bound_check(std::span<const double> raw, int d);

/// Visits every d-subset of {0..c-1} in lexicographic order.
template <typename Fn>
void for_each_subset(int c, int d, Fn&& fn) {
  IndexSet idx(d);
  for (int i = 0; i < d; ++i) idx[i] = i;
  while (true) {
    fn(static_cast<const IndexSet&>(idx));
    int pos = d - 1;
    while (pos >= 0 && idx[pos] == c - d + pos) --pos;
    if (pos < 0) return;
    ++idx[pos];
    for (int j = pos + 1; j < d; ++j) idx[j] = idx[j - 1] + 1;
  }
}

double binomial(int n, int k);

}  // namespace chanprune::oracle
