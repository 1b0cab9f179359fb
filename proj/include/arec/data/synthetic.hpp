#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/error.hpp"
#include "arec/nn/rng.hpp"
#include "arec/nn/tensor.hpp"

namespace arec::data {

/// Knobs of the latent-factor auction simulator.
struct SyntheticConfig {
  std::size_t n_dealers = 500;
  std::size_t n_vehicles = 20000;
  std::size_t latent_dim = 8;
  std::size_t dealer_feature_dim = 16;
  std::size_t vehicle_feature_dim = 32;
  double bids_per_purchase_mean = 3.0;
  double noise_scale = 0.5;
  std::uint64_t seed = 1;
  /// Dealers present at one auction; the purchaser and bidders come from them.
  std::size_t candidates_per_auction = 50;
  /// Bidding intensity rises linearly over the time span: relative intensity
  /// at span fraction τ is (1 + bid_growth·τ) / (1 + bid_growth/2), mean 1.
  double bid_growth = 5.0;
  /// Multiplies every affinity before the softmax draws; large values make
  /// the purchaser the highest-affinity dealer present.
  double choice_sharpness = 1.0;
  Timestamp start_timestamp = 1420070400;  // 2015-01-01T00:00:00Z
  Timestamp span_seconds = 157766400;      // five years
  Timestamp bid_window_seconds = 7 * 24 * 3600;

  void validate() const {
    if (n_dealers == 0 || n_vehicles == 0 || latent_dim == 0 || candidates_per_auction == 0 || span_seconds <= 0) {
      throw ConfigError("synthetic config: counts must be positive");
    }
    if (!(noise_scale >= 0.0)) throw ConfigError("synthetic config: noise_scale must be >= 0");
    if (!(bids_per_purchase_mean >= 0.0)) throw ConfigError("synthetic config: bids_per_purchase_mean must be >= 0");
    if (!(bid_growth >= 0.0)) throw ConfigError("synthetic config: bid_growth must be >= 0");
    if (!(choice_sharpness >= 0.0)) throw ConfigError("synthetic config: choice_sharpness must be >= 0");
    if (start_timestamp < bid_window_seconds + 1) {
      throw ConfigError("synthetic config: start_timestamp must leave room for the bid window");
    }
  }
};

/// Generated dataset plus the planted latents it was drawn from.
struct SyntheticData {
  Dataset dataset;
  nn::Tensor<double> dealer_latents;   // n_dealers × k, row i ↔ dealer id i
  nn::Tensor<double> vehicle_latents;  // n_vehicles × k, row j ↔ vehicle id j

  /// Planted affinity uᵀv.
  double affinity(DealerId d, VehicleId v) const {
    const auto u = dealer_latents.row(static_cast<std::size_t>(d));
    const auto w = vehicle_latents.row(static_cast<std::size_t>(v));
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * w[i];
    return s;
  }
};

/// Index drawn with probability softmax(logits)_i.
inline std::size_t sample_softmax(std::span<const double> logits, nn::Rng& rng) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  double u = rng.uniform() * z;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    u -= std::exp(logits[i] - mx);
    if (u < 0) return i;
  }
  return logits.size() - 1;
}

namespace detail {

inline nn::Tensor<double> gaussian(std::size_t rows, std::size_t cols, double stddev, nn::Rng& rng) {
  nn::Tensor<double> t = nn::Tensor<double>::matrix(rows, cols);
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

// features = A·latent + N(0, noise²), A fixed with entries N(0, 1/k).
inline std::vector<float> observe(std::span<const double> latent, const nn::Tensor<double>& map, double noise,
                                  nn::Rng& rng) {
  std::vector<float> f(map.rows());
  for (std::size_t r = 0; r < map.rows(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < latent.size(); ++c) s += map(r, c) * latent[c];
    if (noise > 0) s += rng.normal(0.0, noise);
    f[r] = static_cast<float>(s);
  }
  return f;
}

}  // namespace detail

/// Latent-factor auction simulator. Each vehicle is auctioned once among a
/// random subset of dealers; the purchaser is drawn ∝ softmax(uᵀv) over that
/// subset and bidders are further draws from the same distribution, placed in
/// the week before the sale.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.latent_dim;
  nn::Rng latent_rng(cfg.seed, 1);
  nn::Rng map_rng(cfg.seed, 2);
  nn::Rng noise_rng(cfg.seed, 3);
  nn::Rng auction_rng(cfg.seed, 4);

  SyntheticData out;
  out.dealer_latents = detail::gaussian(cfg.n_dealers, k, 1.0, latent_rng);
  out.vehicle_latents = detail::gaussian(cfg.n_vehicles, k, 1.0, latent_rng);
  const double map_std = 1.0 / std::sqrt(static_cast<double>(k));
  const auto dealer_map = detail::gaussian(cfg.dealer_feature_dim == 0 ? 1 : cfg.dealer_feature_dim, k, map_std, map_rng);
  const auto vehicle_map =
      detail::gaussian(cfg.vehicle_feature_dim == 0 ? 1 : cfg.vehicle_feature_dim, k, map_std, map_rng);

  std::vector<DealerRecord> dealers(cfg.n_dealers);
  for (std::size_t d = 0; d < cfg.n_dealers; ++d) {
    dealers[d].id = static_cast<DealerId>(d);
    if (cfg.dealer_feature_dim)
      dealers[d].features = detail::observe(out.dealer_latents.row(d), dealer_map, cfg.noise_scale, noise_rng);
  }
  std::vector<VehicleRecord> vehicles(cfg.n_vehicles);
  for (std::size_t v = 0; v < cfg.n_vehicles; ++v) {
    vehicles[v].id = static_cast<VehicleId>(v);
    if (cfg.vehicle_feature_dim)
      vehicles[v].features = detail::observe(out.vehicle_latents.row(v), vehicle_map, cfg.noise_scale, noise_rng);
  }

  const std::size_t m = std::min(cfg.candidates_per_auction, cfg.n_dealers);
  std::vector<std::size_t> pool(cfg.n_dealers);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<double> logits;
  std::vector<std::size_t> present;
  std::vector<Interaction> interactions;
  interactions.reserve(static_cast<std::size_t>(cfg.n_vehicles * (1.0 + cfg.bids_per_purchase_mean)));
  const double growth_norm = 1.0 + cfg.bid_growth / 2.0;

  for (std::size_t v = 0; v < cfg.n_vehicles; ++v) {
    const double tau = auction_rng.uniform();
    const Timestamp sale = cfg.start_timestamp + static_cast<Timestamp>(tau * static_cast<double>(cfg.span_seconds));

    // Partial Fisher-Yates on a persistent permutation: a uniform m-subset.
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + auction_rng.below(cfg.n_dealers - i);
      std::swap(pool[i], pool[j]);
    }
    present.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    logits.resize(m);
    for (std::size_t i = 0; i < m; ++i)
      logits[i] = cfg.choice_sharpness * out.affinity(static_cast<DealerId>(present[i]), static_cast<VehicleId>(v));

    const std::size_t winner = sample_softmax(logits, auction_rng);
    const auto buyer = static_cast<DealerId>(present[winner]);

    const double intensity = cfg.bids_per_purchase_mean * (1.0 + cfg.bid_growth * tau) / growth_norm;
    auto n_bids = static_cast<std::size_t>(auction_rng.poisson(intensity));
    n_bids = std::min(n_bids, m - 1);
    present.erase(present.begin() + static_cast<std::ptrdiff_t>(winner));
    logits.erase(logits.begin() + static_cast<std::ptrdiff_t>(winner));
    for (std::size_t b = 0; b < n_bids; ++b) {
      const std::size_t pick = sample_softmax(logits, auction_rng);
      const Timestamp when = sale - 1 - static_cast<Timestamp>(auction_rng.below(static_cast<std::uint64_t>(cfg.bid_window_seconds)));
      interactions.push_back({static_cast<DealerId>(present[pick]), static_cast<VehicleId>(v), when, Relation::bid});
      present.erase(present.begin() + static_cast<std::ptrdiff_t>(pick));
      logits.erase(logits.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    interactions.push_back({buyer, static_cast<VehicleId>(v), sale, Relation::purchase});
  }

  out.dataset = Dataset(std::move(dealers), std::move(vehicles), std::move(interactions));
  return out;
}

}  // namespace arec::data
