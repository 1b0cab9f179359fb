#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "arec/error.hpp"
#include "arec/nbo/contracts.hpp"
#include "arec/nbo/encoding.hpp"
#include "arec/nbo/model.hpp"
#include "arec/nn/rng.hpp"

namespace arec::nbo {

inline constexpr std::size_t kNboTopK = 5;
inline constexpr std::size_t kDefaultNeighbours = 25;

/// Turns a best-first class order into scores usable by evaluate_nbo.
inline std::vector<double> scores_from_order(std::span<const std::size_t> order, std::size_t num_classes) {
  std::vector<double> s(num_classes, 0.0);
  for (std::size_t i = 0; i < order.size(); ++i) s.at(order[i]) = static_cast<double>(num_classes - i);
  return s;
}

/// Target-class counts over the training rows.
inline std::vector<std::size_t> class_popularity(const ContractTable& t, std::span<const std::size_t> train_rows) {
  std::vector<std::size_t> counts(t.schema.num_classes, 0);
  for (auto r : train_rows) ++counts.at(t.rows.at(r).target_class);
  return counts;
}

/// Every class, the previous one first and the rest by popularity (ties by
/// ascending id).
inline std::vector<std::size_t> repeat_top_pop_order(std::size_t previous_class, std::span<const std::size_t> popularity) {
  if (previous_class >= popularity.size()) throw ArgumentError("previous class outside [0, C)");
  std::vector<std::size_t> rest;
  for (std::size_t c = 0; c < popularity.size(); ++c)
    if (c != previous_class) rest.push_back(c);
  std::stable_sort(rest.begin(), rest.end(), [&](auto a, auto b) { return popularity[a] > popularity[b]; });
  std::vector<std::size_t> out{previous_class};
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

inline std::vector<std::size_t> repeat_top_pop_ranker(const Contract& c, std::span<const std::size_t> popularity,
                                                      std::size_t k = kNboTopK) {
  auto order = repeat_top_pop_order(c.previous_class, popularity);
  order.resize(std::min(k, order.size()));
  return order;
}

inline ClassScorer repeat_top_pop_scorer(std::vector<std::size_t> popularity) {
  return [pop = std::move(popularity)](const Contract& c) {
    return scores_from_order(repeat_top_pop_order(c.previous_class, pop), pop.size());
  };
}

/// I.i.d. uniform class scores. The stream advances per call, so scores
/// depend on the seed and the order in which contracts are scored.
inline ClassScorer random_class_scorer(std::size_t num_classes, std::uint64_t seed) {
  auto rng = std::make_shared<nn::Rng>(seed, 0x72616e64);
  return [rng, num_classes](const Contract&) {
    std::vector<double> s(num_classes);
    for (auto& v : s) v = rng->uniform();
    return s;
  };
}

/// Euclidean k-NN over standardized numericals and one-hot categoricals (the
/// previous class included). Two one-hot blocks that differ contribute 2 to
/// the squared distance.
class KnnIndex {
 public:
  KnnIndex(const ContractTable& t, std::span<const std::size_t> train_rows)
      : encoder_(ContractEncoder::fit(t, train_rows)) {
    train_.reserve(train_rows.size());
    for (auto r : train_rows) train_.push_back(encoder_.encode(t.rows.at(r)));
    num_classes_ = t.schema.num_classes;
  }

  std::size_t size() const noexcept { return train_.size(); }
  const ContractEncoder& encoder() const noexcept { return encoder_; }

  static double squared_distance(const EncodedContract& a, const EncodedContract& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.numerical.size(); ++i) {
      const double x = a.numerical[i] - b.numerical[i];
      d += x * x;
    }
    for (std::size_t i = 0; i < a.categorical.size(); ++i) d += a.categorical[i] == b.categorical[i] ? 0.0 : 2.0;
    d += a.previous_class == b.previous_class ? 0.0 : 2.0;
    return d;
  }

  /// Positions in the training list of the k nearest, closest first; equal
  /// distances keep training order.
  std::vector<std::size_t> neighbours(const Contract& c, std::size_t k) const {
    if (k == 0 || k > train_.size()) {
      throw ArgumentError("knn: k=" + std::to_string(k) + " outside [1, " + std::to_string(train_.size()) + "]");
    }
    const auto q = encoder_.encode(c);
    std::vector<std::pair<double, std::size_t>> d(train_.size());
    for (std::size_t i = 0; i < train_.size(); ++i) d[i] = {squared_distance(q, train_[i]), i};
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
    return out;
  }

  /// Every class by vote count among the k nearest, ties by ascending id.
  std::vector<std::size_t> order(const Contract& c, std::size_t k) const {
    std::vector<std::size_t> votes(num_classes_, 0);
    for (auto i : neighbours(c, k)) ++votes[train_[i].target_class];
    std::vector<std::size_t> out(num_classes_);
    std::iota(out.begin(), out.end(), std::size_t{0});
    std::stable_sort(out.begin(), out.end(), [&](auto a, auto b) { return votes[a] > votes[b]; });
    return out;
  }

 private:
  ContractEncoder encoder_;
  std::vector<EncodedContract> train_;
  std::size_t num_classes_ = 0;
};

inline std::vector<std::size_t> knn_ranker(const Contract& c, const KnnIndex& index, std::size_t k = kDefaultNeighbours) {
  auto out = index.order(c, k);
  out.resize(std::min(kNboTopK, out.size()));
  return out;
}

/// `index` must outlive the scorer.
inline ClassScorer knn_scorer(const KnnIndex& index, std::size_t num_classes, std::size_t k = kDefaultNeighbours) {
  if (k == 0 || k > index.size()) {
    throw ArgumentError("knn: k=" + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "]");
  }
  return [&index, num_classes, k](const Contract& c) { return scores_from_order(index.order(c, k), num_classes); };
}

}  // namespace arec::nbo
