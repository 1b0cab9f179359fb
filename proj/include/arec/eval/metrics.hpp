#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "arec/error.hpp"

namespace arec::eval {

/// True when candidate a ranks above b: higher score first, then smaller id.
template <typename Score>
constexpr bool ranks_before(Score sa, std::int64_t ida, Score sb, std::int64_t idb) noexcept {
  return sa > sb || (sa == sb && ida < idb);
}

/// 1-based rank of `positive` after a descending sort with the id tie-break.
template <typename Score>
std::size_t rank_of_positive(std::span<const Score> scores, std::size_t positive, std::span<const std::int64_t> ids) {
  if (positive >= scores.size()) throw ArgumentError("positive index out of range");
  if (ids.size() != scores.size()) throw DimensionError("scores and ids differ in length");
  std::size_t above = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != positive && ranks_before(scores[j], ids[j], scores[positive], ids[positive])) ++above;
  }
  return above + 1;
}

/// Indices of the candidates in ranked order.
template <typename Score>
std::vector<std::size_t> ranking_order(std::span<const Score> scores, std::span<const std::int64_t> ids) {
  if (ids.size() != scores.size()) throw DimensionError("scores and ids differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ranks_before(scores[a], ids[a], scores[b], ids[b]); });
  return order;
}

inline double hr_contribution(std::size_t rank, std::size_t k) noexcept { return rank <= k ? 1.0 : 0.0; }

inline double ndcg_contribution(std::size_t rank, std::size_t k) noexcept {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

inline double hr_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw ProtocolError("hr@k over zero cases");
  double s = 0;
  for (auto r : ranks) s += hr_contribution(r, k);
  return s / static_cast<double>(ranks.size());
}

/// Single positive per case, so the ideal DCG is 1.
inline double ndcg_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw ProtocolError("ndcg@k over zero cases");
  double s = 0;
  for (auto r : ranks) s += ndcg_contribution(r, k);
  return s / static_cast<double>(ranks.size());
}

}  // namespace arec::eval
