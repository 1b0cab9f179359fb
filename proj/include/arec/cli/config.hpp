#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "arec/baselines/pointwise.hpp"
#include "arec/data/synthetic.hpp"
#include "arec/error.hpp"
#include "arec/eval/protocol.hpp"
#include "arec/json_config.hpp"
#include "arec/nbo/contracts.hpp"
#include "arec/nbo/model.hpp"
#include "arec/sasrec/config.hpp"
#include "json.hpp"

namespace arec::cli {

inline data::SyntheticConfig synthetic_from_json(const nlohmann::json& j) {
  data::SyntheticConfig c;
  JsonFields(j, "synthetic")
      .get("n_dealers", c.n_dealers)
      .get("n_vehicles", c.n_vehicles)
      .get("latent_dim", c.latent_dim)
      .get("dealer_feature_dim", c.dealer_feature_dim)
      .get("vehicle_feature_dim", c.vehicle_feature_dim)
      .get("bids_per_purchase_mean", c.bids_per_purchase_mean)
      .get("noise_scale", c.noise_scale)
      .get("seed", c.seed)
      .get("candidates_per_auction", c.candidates_per_auction)
      .get("bid_growth", c.bid_growth)
      .get("choice_sharpness", c.choice_sharpness)
      .get("start_timestamp", c.start_timestamp)
      .get("span_seconds", c.span_seconds)
      .get("bid_window_seconds", c.bid_window_seconds)
      .finish();
  c.validate();
  return c;
}

inline nbo::ContractSyntheticConfig contracts_from_json(const nlohmann::json& j) {
  nbo::ContractSyntheticConfig c;
  JsonFields(j, "contracts")
      .get("n_records", c.n_records)
      .get("num_classes", c.num_classes)
      .get("occupations", c.occupations)
      .get("regions", c.regions)
      .get("fuel_types", c.fuel_types)
      .get("repeat_rate", c.repeat_rate)
      .get("preference_strength", c.preference_strength)
      .get("popularity_skew", c.popularity_skew)
      .get("deterministic", c.deterministic)
      .get("seed", c.seed)
      .finish();
  c.validate();
  return c;
}

inline baselines::PointwiseConfig pointwise_from_json(const nlohmann::json& j) {
  baselines::PointwiseConfig c;
  JsonFields(j, "pointwise")
      .get("hidden1", c.hidden1)
      .get("hidden2", c.hidden2)
      .get("lr", c.lr)
      .get("epochs", c.epochs)
      .get("batch_size", c.batch_size)
      .get("seed", c.seed)
      .finish();
  c.validate();
  return c;
}

/// K list, negatives per positive, sampling seed, and k-NN neighbour count.
struct EvalSettings {
  eval::EvalProtocol protocol;
  /// Unset means {20} for auction data and {5} for contracts.
  std::vector<std::size_t> ks;
  std::size_t neighbours = 25;
};

inline EvalSettings eval_from_json(const nlohmann::json& j) {
  EvalSettings e;
  JsonFields(j, "eval")
      .get("k", e.ks)
      .get("negatives", e.protocol.negatives)
      .get("seed", e.protocol.seed)
      .get("neighbours", e.neighbours)
      .finish();
  return e;
}

/// Every section a run config may hold. Missing sections keep defaults.
struct RunConfig {
  data::SyntheticConfig synthetic;
  nbo::ContractSyntheticConfig contracts;
  sasrec::SasrecConfig sasrec;
  baselines::PointwiseConfig pointwise;
  nbo::NboConfig nbo;
  EvalSettings eval;

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig rc;
    nlohmann::json syn = nlohmann::json::object(), con = syn, sas = syn, pw = syn, nb = syn, ev = syn;
    JsonFields(j, "config")
        .get("synthetic", syn)
        .get("contracts", con)
        .get("sasrec", sas)
        .get("pointwise", pw)
        .get("nbo", nb)
        .get("eval", ev)
        .finish();
    rc.synthetic = synthetic_from_json(syn);
    rc.contracts = contracts_from_json(con);
    rc.sasrec = sasrec::SasrecConfig::from_json(sas);
    rc.pointwise = pointwise_from_json(pw);
    rc.nbo = nbo::NboConfig::from_json(nb);
    rc.eval = eval_from_json(ev);
    return rc;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + path.string() + ": " + e.what());
    }
  }
};

}  // namespace arec::cli
