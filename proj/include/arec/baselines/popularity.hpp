#pragma once

#include <algorithm>
#include <ranges>
#include <span>
#include <unordered_map>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/data/split.hpp"
#include "arec/eval/protocol.hpp"

namespace arec::baselines {

/// Interaction count per vehicle, bids and purchases alike. With one purchase
/// per vehicle, the bid multiplicity carries all of the signal.
class PopularityIndex {
 public:
  PopularityIndex() = default;

  /// Counts every row handed over; callers decide which rows are admissible.
  template <std::ranges::input_range Rows>
  explicit PopularityIndex(Rows&& rows) {
    for (const data::Interaction& r : rows) ++counts_[r.vehicle];
  }

  /// Built from the training rows only.
  static PopularityIndex fit(const data::Dataset& ds, const data::Split& split) {
    return PopularityIndex(data::train_rows(ds, split));
  }

  std::size_t count(data::VehicleId v) const {
    auto it = counts_.find(v);
    return it == counts_.end() ? 0 : it->second;
  }

  const std::unordered_map<data::VehicleId, std::size_t>& counts() const noexcept { return counts_; }

  friend bool operator==(const PopularityIndex&, const PopularityIndex&) = default;

 private:
  std::unordered_map<data::VehicleId, std::size_t> counts_;
};

/// Descending count, then ascending vehicle id.
inline std::vector<data::VehicleId> popularity_ranker(const PopularityIndex& index,
                                                      std::span<const data::VehicleId> candidates) {
  std::vector<data::VehicleId> out(candidates.begin(), candidates.end());
  std::sort(out.begin(), out.end(), [&](data::VehicleId a, data::VehicleId b) {
    const auto ca = index.count(a), cb = index.count(b);
    return ca > cb || (ca == cb && a < b);
  });
  return out;
}

inline eval::Scorer popularity_scorer(const PopularityIndex& index) {
  return [&index](const eval::EvalCase& c) {
    std::vector<double> s;
    s.reserve(c.candidates.size());
    for (auto v : c.candidates) s.push_back(static_cast<double>(index.count(v)));
    return s;
  };
}

}  // namespace arec::baselines
