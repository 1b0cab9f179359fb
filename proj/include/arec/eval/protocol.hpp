#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/data/split.hpp"
#include "arec/error.hpp"
#include "arec/eval/metrics.hpp"
#include "arec/nn/rng.hpp"
#include "json.hpp"

namespace arec::eval {

using data::DealerId;
using data::Timestamp;
using data::VehicleId;

struct EvalProtocol {
  std::vector<std::size_t> ks{20};
  std::size_t negatives = 103;
  std::uint64_t seed = 0;

  std::size_t pool_size() const noexcept { return negatives + 1; }

  void validate() const {
    if (negatives < 1) throw ProtocolError("negatives must be >= 1");
    if (ks.empty()) throw ProtocolError("at least one K is required");
    for (auto k : ks) {
      if (k < 1 || k > pool_size()) {
        throw ProtocolError("K=" + std::to_string(k) + " must lie in [1, " + std::to_string(pool_size()) + "]");
      }
    }
  }
};

/// One held-out purchase with its sampled candidate pool. candidates[0] is the
/// positive; the order of the rest carries no meaning.
struct EvalCase {
  std::size_t index = 0;
  DealerId dealer = 0;
  Timestamp timestamp = 0;
  VehicleId positive = 0;
  std::vector<VehicleId> candidates;
};

/// Scores for case.candidates, same order. Higher is better.
using Scorer = std::function<std::vector<double>(const EvalCase&)>;

/// Candidate pools for the given held-out purchases. Negatives are drawn
/// uniformly without replacement from vehicles the dealer never touched (any
/// relation, any time), with a stream keyed by (seed, case index).
inline std::vector<EvalCase> build_cases(const data::Dataset& ds, const std::vector<data::Interaction>& heldout,
                                         const EvalProtocol& protocol) {
  protocol.validate();
  const auto& vehicles = ds.vehicles();
  std::vector<EvalCase> cases;
  cases.reserve(heldout.size());
  std::unordered_set<VehicleId> touched;
  std::unordered_set<VehicleId> chosen;
  std::vector<VehicleId> eligible;
  for (std::size_t c = 0; c < heldout.size(); ++c) {
    const auto& h = heldout[c];
    touched.clear();
    for (std::size_t idx : ds.timeline(h.dealer)) touched.insert(ds.interactions()[idx].vehicle);
    const std::size_t available = vehicles.size() - touched.size();
    if (available < protocol.negatives) {
      throw ProtocolError("dealer " + std::to_string(h.dealer) + " has " + std::to_string(available) +
                          " eligible negatives, need " + std::to_string(protocol.negatives));
    }
    EvalCase ec{c, h.dealer, h.timestamp, h.vehicle, {h.vehicle}};
    ec.candidates.reserve(protocol.pool_size());
    nn::Rng rng(nn::derive_seed(protocol.seed, c));
    if (available >= 4 * protocol.negatives) {
      // Sparse regime: rejection sampling touches few vehicles.
      chosen.clear();
      while (ec.candidates.size() < protocol.pool_size()) {
        const VehicleId v = vehicles[rng.below(vehicles.size())].id;
        if (touched.contains(v) || !chosen.insert(v).second) continue;
        ec.candidates.push_back(v);
      }
    } else {
      eligible.clear();
      for (const auto& v : vehicles)
        if (!touched.contains(v.id)) eligible.push_back(v.id);
      for (std::size_t i = 0; i < protocol.negatives; ++i) {
        std::swap(eligible[i], eligible[i + rng.below(eligible.size() - i)]);
        ec.candidates.push_back(eligible[i]);
      }
    }
    cases.push_back(std::move(ec));
  }
  return cases;
}

struct MetricPair {
  double hr = 0;
  double ndcg = 0;
};

struct EvalResult {
  std::map<std::size_t, MetricPair> at_k;
  std::vector<std::size_t> ranks;
};

inline std::vector<std::size_t> rank_cases(const std::vector<EvalCase>& cases, const Scorer& scorer) {
  std::vector<std::size_t> ranks;
  ranks.reserve(cases.size());
  for (const auto& c : cases) {
    const auto scores = scorer(c);
    if (scores.size() != c.candidates.size()) throw DimensionError("scorer returned the wrong number of scores");
    for (double s : scores) {
      if (std::isnan(s)) throw NumericError("NaN score for dealer " + std::to_string(c.dealer));
    }
    ranks.push_back(rank_of_positive<double>(scores, 0, c.candidates));
  }
  return ranks;
}

inline EvalResult summarize(std::vector<std::size_t> ranks, const std::vector<std::size_t>& ks) {
  EvalResult r;
  for (auto k : ks) r.at_k[k] = {hr_at_k(ranks, k), ndcg_at_k(ranks, k)};
  r.ranks = std::move(ranks);
  return r;
}

inline EvalResult evaluate(const Scorer& scorer, const std::vector<EvalCase>& cases, const EvalProtocol& protocol) {
  if (cases.empty()) throw ProtocolError("no evaluation cases");
  return summarize(rank_cases(cases, scorer), protocol.ks);
}

inline EvalResult evaluate(const Scorer& scorer, const data::Dataset& ds, const std::vector<data::Interaction>& heldout,
                           const EvalProtocol& protocol) {
  return evaluate(scorer, build_cases(ds, heldout, protocol), protocol);
}

struct DatasetFingerprint {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t purchases = 0;
  std::size_t bids = 0;

  static DatasetFingerprint of(const data::Dataset& ds) {
    return {ds.dealers().size(), ds.vehicles().size(), ds.count(data::Relation::purchase),
            ds.count(data::Relation::bid)};
  }
};

struct EvalReport {
  std::string model;
  EvalProtocol protocol;
  EvalResult result;
  nlohmann::ordered_json dataset = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["protocol"] = {{"k", protocol.ks}, {"negatives", protocol.negatives}, {"seed", protocol.seed}};
    auto& m = j["metrics"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : result.at_k) {
      m["hr@" + std::to_string(k)] = v.hr;
      m["ndcg@" + std::to_string(k)] = v.ndcg;
    }
    j["dataset"] = dataset;
    return j;
  }
};

inline nlohmann::ordered_json fingerprint_json(const DatasetFingerprint& f) {
  return {{"users", f.users}, {"items", f.items}, {"purchases", f.purchases}, {"bids", f.bids}};
}

}  // namespace arec::eval
