#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace agentrec {

struct KnapsackEntry {
  double score = 0.0;      // non-negative
  std::size_t length = 1;  // tokens, >= 1
};

struct KnapsackSelection {
  std::vector<std::size_t> chosen;  // ascending entry indices
  double total_score = 0.0;         // summed in index order
  std::size_t total_length = 0;
  bool approximate = false;
};

inline constexpr std::size_t kExactKnapsackLimit = 20;

/// 0/1 knapsack: maximize the summed score subject to total length <= budget.
///
/// Up to `exact_limit` entries the optimum is exact (dynamic program over the
/// budget). The DP adds scores in index order, the same order used for
/// `total_score`, and floating-point addition is monotone, so the reported
/// total equals the maximum over all subsets of their index-order sums. Above
/// the limit a greedy score-density pass is used and `approximate` is set.
KnapsackSelection solve_knapsack(std::span<const KnapsackEntry> entries, std::size_t budget,
                                 std::size_t exact_limit = kExactKnapsackLimit);

}  // namespace agentrec
