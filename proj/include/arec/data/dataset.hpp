#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "arec/error.hpp"
#include "arec/nn/tensor.hpp"

namespace arec::data {

using DealerId = std::int64_t;
using VehicleId = std::int64_t;
using Timestamp = std::int64_t;

enum class Relation : std::uint8_t { purchase = 0, bid = 1 };

inline std::string_view to_string(Relation r) { return r == Relation::purchase ? "purchase" : "bid"; }

inline std::optional<Relation> parse_relation(std::string_view s) {
  if (s == "purchase") return Relation::purchase;
  if (s == "bid") return Relation::bid;
  return std::nullopt;
}

struct DealerRecord {
  DealerId id = 0;
  std::vector<float> features;
};

struct VehicleRecord {
  VehicleId id = 0;
  std::vector<float> features;
};

struct Interaction {
  DealerId dealer = 0;
  VehicleId vehicle = 0;
  Timestamp timestamp = 0;
  Relation relation = Relation::purchase;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Dealers, vehicles and their interactions, validated and indexed. Immutable
/// after construction.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<DealerRecord> dealers, std::vector<VehicleRecord> vehicles,
          std::vector<Interaction> interactions)
      : dealers_(std::move(dealers)), vehicles_(std::move(vehicles)), interactions_(std::move(interactions)) {
    index_entities();
    validate_interactions();
    build_timelines();
  }

  const std::vector<DealerRecord>& dealers() const noexcept { return dealers_; }
  const std::vector<VehicleRecord>& vehicles() const noexcept { return vehicles_; }
  const std::vector<Interaction>& interactions() const noexcept { return interactions_; }

  std::size_t dealer_feature_dim() const noexcept { return dealer_dim_; }
  std::size_t vehicle_feature_dim() const noexcept { return vehicle_dim_; }

  std::optional<std::size_t> dealer_index(DealerId id) const {
    auto it = dealer_pos_.find(id);
    return it == dealer_pos_.end() ? std::nullopt : std::optional(it->second);
  }
  std::optional<std::size_t> vehicle_index(VehicleId id) const {
    auto it = vehicle_pos_.find(id);
    return it == vehicle_pos_.end() ? std::nullopt : std::optional(it->second);
  }
  bool has_dealer(DealerId id) const { return dealer_pos_.contains(id); }

  const DealerRecord& dealer(DealerId id) const { return dealers_[require_dealer(id)]; }
  const VehicleRecord& vehicle(VehicleId id) const { return vehicles_[require_vehicle(id)]; }

  std::span<const float> vehicle_features(VehicleId id) const { return vehicle(id).features; }

  /// Positions in interactions() for one dealer, sorted by (timestamp, input order).
  std::span<const std::size_t> timeline(DealerId id) const {
    return timelines_[require_dealer(id)];
  }

  std::size_t count(Relation r) const {
    return static_cast<std::size_t>(std::count_if(interactions_.begin(), interactions_.end(),
                                                  [r](const Interaction& i) { return i.relation == r; }));
  }

 private:
  std::size_t require_dealer(DealerId id) const {
    auto idx = dealer_index(id);
    if (!idx) throw ArgumentError("unknown dealer_id " + std::to_string(id));
    return *idx;
  }
  std::size_t require_vehicle(VehicleId id) const {
    auto idx = vehicle_index(id);
    if (!idx) throw ArgumentError("unknown vehicle_id " + std::to_string(id));
    return *idx;
  }

  template <typename Records>
  static std::size_t check_features(const Records& records, const char* what) {
    if (records.empty()) return 0;
    const std::size_t dim = records.front().features.size();
    for (const auto& r : records) {
      if (r.features.size() != dim) {
        throw IngestionError(std::string(what) + " " + std::to_string(r.id) + " has " +
                             std::to_string(r.features.size()) + " features, expected " + std::to_string(dim));
      }
      for (float f : r.features) {
        if (!std::isfinite(f)) {
          throw IngestionError(std::string(what) + " " + std::to_string(r.id) + " has a non-finite feature");
        }
      }
    }
    return dim;
  }

  void index_entities() {
    dealer_dim_ = check_features(dealers_, "dealer");
    vehicle_dim_ = check_features(vehicles_, "vehicle");
    for (std::size_t i = 0; i < dealers_.size(); ++i) {
      if (!dealer_pos_.emplace(dealers_[i].id, i).second) {
        throw IngestionError("duplicate dealer_id " + std::to_string(dealers_[i].id));
      }
    }
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
      if (!vehicle_pos_.emplace(vehicles_[i].id, i).second) {
        throw IngestionError("duplicate vehicle_id " + std::to_string(vehicles_[i].id));
      }
    }
  }

  void validate_interactions() const {
    std::vector<std::uint8_t> purchased(vehicles_.size(), 0);
    for (std::size_t i = 0; i < interactions_.size(); ++i) {
      const auto& it = interactions_[i];
      const std::string where = "interaction " + std::to_string(i);
      if (!dealer_pos_.contains(it.dealer)) {
        throw IngestionError(where + ": unknown dealer_id " + std::to_string(it.dealer));
      }
      auto v = vehicle_pos_.find(it.vehicle);
      if (v == vehicle_pos_.end()) {
        throw IngestionError(where + ": unknown vehicle_id " + std::to_string(it.vehicle));
      }
      if (it.timestamp < 0) throw IngestionError(where + ": negative timestamp");
      if (it.relation == Relation::purchase) {
        if (purchased[v->second]) {
          throw IngestionError(where + ": vehicle " + std::to_string(it.vehicle) + " purchased twice");
        }
        purchased[v->second] = 1;
      }
    }
  }

  void build_timelines() {
    timelines_.assign(dealers_.size(), {});
    for (std::size_t i = 0; i < interactions_.size(); ++i) {
      timelines_[dealer_pos_.at(interactions_[i].dealer)].push_back(i);
    }
    for (auto& tl : timelines_) {
      std::stable_sort(tl.begin(), tl.end(), [this](std::size_t a, std::size_t b) {
        return interactions_[a].timestamp < interactions_[b].timestamp;
      });
    }
  }

  std::vector<DealerRecord> dealers_;
  std::vector<VehicleRecord> vehicles_;
  std::vector<Interaction> interactions_;
  std::size_t dealer_dim_ = 0;
  std::size_t vehicle_dim_ = 0;
  std::unordered_map<DealerId, std::size_t> dealer_pos_;
  std::unordered_map<VehicleId, std::size_t> vehicle_pos_;
  std::vector<std::vector<std::size_t>> timelines_;
};

/// Counts and densities of a dataset.
struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t purchases = 0;
  std::size_t biddings = 0;
  double purchase_density_pct = 0.0;
  double bidding_density_pct = 0.0;
  double unique_item_pct = 0.0;
  std::size_t user_features = 0;
  std::size_t item_features = 0;
};

/// density(relation) = count / (users × items), as a percentage.
inline DatasetStats stats_from_counts(std::size_t users, std::size_t items, std::size_t purchases,
                                      std::size_t biddings, std::size_t distinct_purchased_items) {
  if (users == 0 || items == 0) {
    throw ProtocolError("density is undefined for a dataset with zero users or items");
  }
  DatasetStats s;
  s.users = users;
  s.items = items;
  s.purchases = purchases;
  s.biddings = biddings;
  const double cells = static_cast<double>(users) * static_cast<double>(items);
  s.purchase_density_pct = 100.0 * static_cast<double>(purchases) / cells;
  s.bidding_density_pct = 100.0 * static_cast<double>(biddings) / cells;
  s.unique_item_pct =
      purchases == 0 ? 100.0 : 100.0 * static_cast<double>(distinct_purchased_items) / static_cast<double>(purchases);
  return s;
}

inline DatasetStats stats(const Dataset& ds) {
  std::size_t purchases = 0, bids = 0;
  std::unordered_map<VehicleId, std::size_t> bought;
  for (const auto& i : ds.interactions()) {
    if (i.relation == Relation::purchase) {
      ++purchases;
      ++bought[i.vehicle];
    } else {
      ++bids;
    }
  }
  const auto once = static_cast<std::size_t>(
      std::count_if(bought.begin(), bought.end(), [](const auto& kv) { return kv.second == 1; }));
  auto s = stats_from_counts(ds.dealers().size(), ds.vehicles().size(), purchases, bids, once);
  s.user_features = ds.dealer_feature_dim();
  s.item_features = ds.vehicle_feature_dim();
  return s;
}

/// Rounds to `decimals` places.
inline double round_to(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(x * scale) / scale;
}

}  // namespace arec::data
