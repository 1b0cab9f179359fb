#pragma once

#include <limits>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "arec/data/dataset.hpp"

namespace arec::data {

/// Leave-one-out partition of the purchases. Bids are never held out; they
/// stay available as history.
struct Split {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  std::vector<Interaction> bids;
  /// Timestamp of the validation purchase, for dealers that have held-out rows.
  std::unordered_map<DealerId, Timestamp> holdout_start;

  std::optional<Timestamp> holdout_of(DealerId d) const {
    auto it = holdout_start.find(d);
    return it == holdout_start.end() ? std::nullopt : std::optional(it->second);
  }
};

inline constexpr std::size_t kMinPurchasesForHoldout = 3;

/// Per dealer with ≥3 purchases: last purchase → test, second-to-last →
/// validation, the rest → train. Dealers with fewer purchases put everything
/// in train and are not evaluated.
inline Split leave_one_out_split(const Dataset& ds) {
  Split s;
  for (const auto& dealer : ds.dealers()) {
    std::vector<Interaction> purchases;
    for (std::size_t idx : ds.timeline(dealer.id)) {
      const auto& it = ds.interactions()[idx];
      if (it.relation == Relation::purchase) {
        purchases.push_back(it);
      } else {
        s.bids.push_back(it);
      }
    }
    if (purchases.size() < kMinPurchasesForHoldout) {
      s.train.insert(s.train.end(), purchases.begin(), purchases.end());
      continue;
    }
    const auto& val = purchases[purchases.size() - 2];
    s.train.insert(s.train.end(), purchases.begin(), purchases.end() - 2);
    s.validation.push_back(val);
    s.test.push_back(purchases.back());
    s.holdout_start.emplace(dealer.id, val.timestamp);
  }
  return s;
}

/// The dealer's interactions strictly before `cutoff`, chronological.
inline std::vector<Interaction> history_before(const Dataset& ds, DealerId dealer, Timestamp cutoff,
                                               bool include_bids = true) {
  std::vector<Interaction> out;
  for (std::size_t idx : ds.timeline(dealer)) {
    const auto& it = ds.interactions()[idx];
    if (it.timestamp >= cutoff) break;
    if (include_bids || it.relation == Relation::purchase) out.push_back(it);
  }
  return out;
}

/// The dealer's full chronological history (no cutoff).
inline std::vector<Interaction> full_history(const Dataset& ds, DealerId dealer, bool include_bids = true) {
  return history_before(ds, dealer, std::numeric_limits<Timestamp>::max(), include_bids);
}

/// Chronological training sequence: train purchases plus bids, all strictly
/// before the dealer's first held-out purchase.
inline std::vector<Interaction> training_sequence(const Dataset& ds, const Split& split, DealerId dealer,
                                                  bool include_bids = true) {
  const auto cutoff = split.holdout_of(dealer).value_or(std::numeric_limits<Timestamp>::max());
  return history_before(ds, dealer, cutoff, include_bids);
}

/// Every row outside the held-out purchases: train purchases plus all bids,
/// in dealer order, chronological within a dealer. Non-sequential models learn
/// from these; sequence training additionally stops at each dealer's holdout.
inline std::vector<Interaction> train_rows(const Dataset& ds, const Split& split) {
  std::unordered_set<VehicleId> heldout;
  for (const auto* part : {&split.validation, &split.test})
    for (const auto& i : *part) heldout.insert(i.vehicle);
  std::vector<Interaction> rows;
  for (const auto& dealer : ds.dealers()) {
    for (std::size_t idx : ds.timeline(dealer.id)) {
      const auto& it = ds.interactions()[idx];
      if (it.relation == Relation::purchase && heldout.contains(it.vehicle)) continue;
      rows.push_back(it);
    }
  }
  return rows;
}

}  // namespace arec::data
