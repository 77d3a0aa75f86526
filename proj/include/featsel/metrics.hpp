#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace featsel {

/// Rank-based AUC (Mann-Whitney): tied scores receive average ranks.
/// Requires at least one positive and one negative label.
inline double auc(const std::vector<double>& scores,
                  const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto y : labels) n_pos += y ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auc: needs both classes present");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] < scores[b];
  });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg_rank;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k]) pos_rank_sum += rank[k];
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Pools the two methods' AUC runs (5 each), ranks them descending with ties
/// going to method A, and counts how many of the top three belong to
/// method B.
inline int top3_score(const std::vector<double>& method_a_aucs,
                      const std::vector<double>& method_b_aucs) {
  if (method_a_aucs.size() != method_b_aucs.size())
    throw std::invalid_argument("top3_score: run-count mismatch");
  if (method_a_aucs.size() != 5)
    throw std::invalid_argument("top3_score: expects exactly 5 runs per method");
  struct Entry {
    double v;
    bool is_b;
  };
  std::vector<Entry> pool;
  for (double v : method_a_aucs) pool.push_back({v, false});
  for (double v : method_b_aucs) pool.push_back({v, true});
  std::stable_sort(pool.begin(), pool.end(), [](const Entry& x, const Entry& y) {
    if (x.v != y.v) return x.v > y.v;
    return !x.is_b && y.is_b;  // ties favor the baseline
  });
  int count = 0;
  for (std::size_t i = 0; i < 3; ++i) count += pool[i].is_b ? 1 : 0;
  return count;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1 denominator); 0 when n < 2.
inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace featsel
