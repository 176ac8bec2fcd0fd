#include "agentrec/knapsack.hpp"

#include <algorithm>
#include <numeric>

#include "agentrec/error.hpp"

namespace agentrec {

namespace {

KnapsackSelection finish(std::span<const KnapsackEntry> entries, std::vector<std::size_t> chosen,
                         bool approximate) {
  std::sort(chosen.begin(), chosen.end());
  KnapsackSelection sel;
  sel.approximate = approximate;
  for (std::size_t i : chosen) {
    sel.total_score += entries[i].score;
    sel.total_length += entries[i].length;
  }
  sel.chosen = std::move(chosen);
  return sel;
}

KnapsackSelection solve_exact(std::span<const KnapsackEntry> entries, std::size_t budget) {
  const std::size_t n = entries.size();
  const std::size_t width = budget + 1;
  std::vector<double> best((n + 1) * width, 0.0);
  std::vector<char> take((n + 1) * width, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    const auto& e = entries[i - 1];
    for (std::size_t w = 0; w <= budget; ++w) {
      double skip = best[(i - 1) * width + w];
      double keep = -1.0;
      if (e.length <= w) keep = best[(i - 1) * width + (w - e.length)] + e.score;
      if (keep > skip) {
        best[i * width + w] = keep;
        take[i * width + w] = 1;
      } else {
        best[i * width + w] = skip;
      }
    }
  }
  std::vector<std::size_t> chosen;
  std::size_t w = budget;
  for (std::size_t i = n; i > 0; --i) {
    if (take[i * width + w] != 0) {
      chosen.push_back(i - 1);
      w -= entries[i - 1].length;
    }
  }
  return finish(entries, std::move(chosen), false);
}

KnapsackSelection solve_greedy(std::span<const KnapsackEntry> entries, std::size_t budget) {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    // score_a / len_a > score_b / len_b without dividing
    return entries[a].score * static_cast<double>(entries[b].length) >
           entries[b].score * static_cast<double>(entries[a].length);
  });
  std::vector<std::size_t> chosen;
  std::size_t used = 0;
  for (std::size_t i : order) {
    if (used + entries[i].length <= budget) {
      chosen.push_back(i);
      used += entries[i].length;
    }
  }
  return finish(entries, std::move(chosen), true);
}

}  // namespace

KnapsackSelection solve_knapsack(std::span<const KnapsackEntry> entries, std::size_t budget,
                                 std::size_t exact_limit) {
  std::size_t total = 0;
  for (const auto& e : entries) {
    if (e.length == 0) fail(Errc::InvalidArgument, "knapsack entry with zero length");
    if (!(e.score >= 0.0)) fail(Errc::InvalidArgument, "knapsack entry with negative or NaN score");
    total += e.length;
  }
  if (budget == 0 || entries.empty()) return {};
  if (total <= budget) {
    std::vector<std::size_t> all(entries.size());
    std::iota(all.begin(), all.end(), 0);
    return finish(entries, std::move(all), false);
  }
  if (entries.size() <= exact_limit) return solve_exact(entries, std::min(budget, total));
  return solve_greedy(entries, budget);
}

}  // namespace agentrec
