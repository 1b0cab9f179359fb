#pragma once

#include <iostream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/data/split.hpp"
#include "arec/error.hpp"
#include "arec/eval/protocol.hpp"
#include "arec/nn/adam.hpp"
#include "arec/nn/checkpoint.hpp"
#include "arec/nn/graph.hpp"
#include "arec/nn/init.hpp"
#include "arec/nn/ops.hpp"
#include "arec/nn/rng.hpp"

namespace arec::baselines {

struct PointwiseConfig {
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 64;
  double lr = 1e-3;
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden1 == 0 || hidden2 == 0) throw ConfigError("pointwise: hidden widths must be positive");
    if (batch_size == 0) throw ConfigError("pointwise: batch_size must be positive");
    if (!(lr > 0)) throw ConfigError("pointwise: lr must be positive");
  }
};

inline constexpr const char* kPointwiseKind = "pointwise";

/// Non-sequential scorer over dealer features ⊕ vehicle features ⊕ relation
/// indicator (1 = purchase), two ReLU layers then a logit.
template <typename T>
class PointwiseModel {
 public:
  PointwiseModel(std::size_t dealer_dim, std::size_t vehicle_dim, std::size_t hidden1 = 128, std::size_t hidden2 = 64)
      : dealer_dim_(dealer_dim), vehicle_dim_(vehicle_dim), hidden1_(hidden1), hidden2_(hidden2) {
    const std::size_t in = input_dim();
    params_.add("w1", nn::Tensor<T>::matrix(in, hidden1));
    params_.add("b1", nn::Tensor<T>::matrix(1, hidden1));
    params_.add("w2", nn::Tensor<T>::matrix(hidden1, hidden2));
    params_.add("b2", nn::Tensor<T>::matrix(1, hidden2));
    params_.add("w3", nn::Tensor<T>::matrix(hidden2, 1));
    params_.add("b3", nn::Tensor<T>::matrix(1, 1));
  }

  void init_xavier(std::uint64_t seed) {
    nn::Rng rng(seed, 0x7077);
    params_.at("w1").value = nn::init::xavier_uniform<T>(input_dim(), hidden1_, rng);
    params_.at("w2").value = nn::init::xavier_uniform<T>(hidden1_, hidden2_, rng);
    params_.at("w3").value = nn::init::xavier_uniform<T>(hidden2_, 1, rng);
  }

  std::size_t input_dim() const noexcept { return dealer_dim_ + vehicle_dim_ + 1; }
  nn::ParameterSet<T>& params() noexcept { return params_; }
  const nn::ParameterSet<T>& params() const noexcept { return params_; }

  /// Logits [rows×1] for an input matrix [rows×input_dim].
  nn::Var<T> forward(nn::Graph<T>& g, nn::Tensor<T> x) {
    if (x.cols() != input_dim()) throw DimensionError("pointwise: input width mismatch");
    auto h = nn::relu(nn::linear(g.constant(std::move(x)), g.param(params_.at("w1")), g.param(params_.at("b1"))));
    h = nn::relu(nn::linear(h, g.param(params_.at("w2")), g.param(params_.at("b2"))));
    return nn::linear(h, g.param(params_.at("w3")), g.param(params_.at("b3")));
  }

  void fill_row(std::span<T> dst, std::span<const float> dealer, std::span<const float> vehicle,
                data::Relation rel) const {
    if (dealer.size() != dealer_dim_ || vehicle.size() != vehicle_dim_) {
      throw DimensionError("pointwise: feature length mismatch");
    }
    std::size_t j = 0;
    for (float f : dealer) dst[j++] = static_cast<T>(f);
    for (float f : vehicle) dst[j++] = static_cast<T>(f);
    dst[j] = rel == data::Relation::purchase ? T{1} : T{0};
  }

  /// Purchase-relation scores of the candidates for one dealer.
  std::vector<double> score(const data::Dataset& ds, data::DealerId dealer,
                            std::span<const data::VehicleId> candidates) {
    auto x = nn::Tensor<T>::matrix(candidates.size(), input_dim());
    const auto& df = ds.dealer(dealer).features;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      fill_row(x.row(i), df, ds.vehicle_features(candidates[i]), data::Relation::purchase);
    nn::Graph<T> g;
    auto out = forward(g, std::move(x));
    std::vector<double> s(candidates.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(out.value()[i]);
    return s;
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint c;
    c.kind = kPointwiseKind;
    c.hyperparams = {{"dealer_dim", dealer_dim_}, {"vehicle_dim", vehicle_dim_}, {"hidden1", hidden1_},
                     {"hidden2", hidden2_}};
    c.blocks = nn::export_parameters(params_);
    return c;
  }

  static PointwiseModel from_checkpoint(const nn::Checkpoint& c) {
    if (c.kind != kPointwiseKind) throw ArgumentError("checkpoint kind '" + c.kind + "' is not pointwise");
    const auto& h = c.hyperparams;
    PointwiseModel m(h.at("dealer_dim").get<std::size_t>(), h.at("vehicle_dim").get<std::size_t>(),
                     h.at("hidden1").get<std::size_t>(), h.at("hidden2").get<std::size_t>());
    nn::import_parameters(c, m.params_);
    return m;
  }

 private:
  std::size_t dealer_dim_, vehicle_dim_, hidden1_, hidden2_;
  nn::ParameterSet<T> params_;
};

/// Mean BCE over a batch of (dealer, vehicle, relation, label) rows.
template <typename T>
nn::Var<T> pointwise_loss(nn::Graph<T>& g, PointwiseModel<T>& model, const data::Dataset& ds,
                          std::span<const data::Interaction> rows, std::span<const T> labels) {
  auto x = nn::Tensor<T>::matrix(rows.size(), model.input_dim());
  for (std::size_t i = 0; i < rows.size(); ++i)
    model.fill_row(x.row(i), ds.dealer(rows[i].dealer).features, ds.vehicle_features(rows[i].vehicle),
                   rows[i].relation);
  auto logits = model.forward(g, std::move(x));
  std::vector<T> w(rows.size(), T{1} / static_cast<T>(rows.size()));
  return nn::bce_with_logits(logits, std::vector<T>(labels.begin(), labels.end()), std::move(w));
}

/// Every training row is a positive; each gets one uniformly drawn vehicle as
/// a negative with the same dealer and relation.
inline PointwiseModel<float> train_pointwise(const data::Dataset& ds, const data::Split& split,
                                             const PointwiseConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const auto rows = data::train_rows(ds, split);
  if (rows.empty()) throw ConfigError("pointwise: empty training split");
  PointwiseModel<float> model(ds.dealer_feature_dim(), ds.vehicle_feature_dim(), cfg.hidden1, cfg.hidden2);
  model.init_xavier(cfg.seed);
  nn::Adam<float> opt(model.params(), {cfg.lr});
  nn::Rng rng(cfg.seed, 0x7077'7472);
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<data::Interaction> batch;
  std::vector<float> labels;
  const auto& vehicles = ds.vehicles();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    nn::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        auto pos = rows[order[i]];
        auto neg = pos;
        neg.vehicle = vehicles[rng.below(vehicles.size())].id;
        batch.push_back(pos);
        labels.push_back(1.f);
        batch.push_back(neg);
        labels.push_back(0.f);
      }
      nn::Graph<float> g({true, 0});
      auto loss = pointwise_loss<float>(g, model, ds, batch, labels);
      g.backward(loss);
      opt.step(model.params());
      total += loss.value()[0];
      ++batches;
    }
    if (log) *log << "pointwise epoch " << epoch + 1 << " loss " << total / static_cast<double>(batches) << '\n';
  }
  return model;
}

template <typename T>
eval::Scorer pointwise_scorer(PointwiseModel<T>& model, const data::Dataset& ds) {
  return [&model, &ds](const eval::EvalCase& c) { return model.score(ds, c.dealer, c.candidates); };
}

}  // namespace arec::baselines
