#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/data/split.hpp"
#include "arec/error.hpp"
#include "arec/eval/protocol.hpp"
#include "arec/nn/adam.hpp"
#include "arec/nn/rng.hpp"
#include "arec/sasrec/model.hpp"
#include "json.hpp"

namespace arec::sasrec {

/// Training windows: each dealer's training sequence cut from the most recent
/// end into chunks of at most n+1 entries. Consecutive chunks share one entry
/// so every entry after the first is a prediction target exactly once.
inline std::vector<std::vector<data::Interaction>> training_windows(const data::Dataset& ds, const data::Split& split,
                                                                    const SasrecConfig& cfg) {
  std::vector<std::vector<data::Interaction>> out;
  const std::size_t span = cfg.max_seq_len + 1;
  for (const auto& dealer : ds.dealers()) {
    const auto seq = data::training_sequence(ds, split, dealer.id, cfg.bids_in_input);
    std::size_t end = seq.size();
    while (end >= 2) {
      const std::size_t start = end > span ? end - span : 0;
      out.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(start), seq.begin() + static_cast<std::ptrdiff_t>(end));
      end = start + 1;
      if (start == 0) break;
    }
  }
  return out;
}

/// Loss weights for one batch: purchase-target terms share 1/#purchase
/// targets, bid-target terms share λ/#bid targets.
template <typename T>
struct TargetWeights {
  T purchase{0};
  T bid{0};
};

template <typename T>
TargetWeights<T> batch_weights(std::span<const std::vector<data::Interaction>* const> windows, double lambda) {
  std::size_t purchases = 0, bids = 0;
  for (const auto* w : windows)
    for (std::size_t i = 1; i < w->size(); ++i) ((*w)[i].relation == data::Relation::purchase ? purchases : bids)++;
  TargetWeights<T> tw;
  if (purchases) tw.purchase = static_cast<T>(1.0 / static_cast<double>(purchases));
  if (bids) tw.bid = static_cast<T>(lambda / static_cast<double>(bids));
  return tw;
}

/// Weighted next-item loss of one window. `negatives` holds
/// negatives_per_position vehicles for each target position, row-major.
/// Each position contributes BCE(positive, 1) + Σ BCE(negative, 0), scaled by
/// the weight of its target relation.
template <typename T>
nn::Var<T> window_loss(nn::Graph<T>& g, const SasrecModel<T>& model, const data::Dataset& ds,
                       std::span<const data::Interaction> window, std::span<const data::VehicleId> negatives,
                       TargetWeights<T> weights) {
  if (window.size() < 2) throw ArgumentError("sasrec: a training window needs at least two entries");
  const std::size_t m = window.size() - 1;
  const std::size_t neg = model.config().negatives_per_position;
  if (negatives.size() != m * neg) throw DimensionError("sasrec: wrong number of negatives for window");
  auto input = make_sequence<T>(ds, window.first(m), model.config().max_seq_len);
  auto h = model.forward(g, input);

  const std::size_t rows = m * (1 + neg);
  std::vector<data::VehicleId> items;
  std::vector<std::size_t> owner;
  std::vector<T> labels, w;
  items.reserve(rows);
  for (std::size_t t = 0; t < m; ++t) {
    const auto& target = window[t + 1];
    const T wt = target.relation == data::Relation::purchase ? weights.purchase : weights.bid;
    items.push_back(target.vehicle);
    owner.push_back(t);
    labels.push_back(T{1});
    w.push_back(wt);
    for (std::size_t k = 0; k < neg; ++k) {
      items.push_back(negatives[t * neg + k]);
      owner.push_back(t);
      labels.push_back(T{0});
      w.push_back(wt);
    }
  }
  auto e = model.item_vectors(g, candidate_features<T>(ds, items));
  auto logits = nn::row_dot(nn::gather_rows(h, std::move(owner)), e);
  return nn::bce_with_logits(logits, std::move(labels), std::move(w));
}

/// Scorer over eval cases: history = every interaction strictly before the
/// held-out purchase (bids only if the model was trained with them).
template <typename T>
eval::Scorer sasrec_scorer(const SasrecModel<T>& model, const data::Dataset& ds) {
  return [&model, &ds](const eval::EvalCase& c) {
    const auto hist = data::history_before(ds, c.dealer, c.timestamp, model.config().bids_in_input);
    const auto seq = make_sequence<T>(ds, hist, model.config().max_seq_len);
    const auto q = model.query(seq);
    const auto s = model.score_candidates(q, candidate_features<T>(ds, c.candidates));
    return std::vector<double>(s.begin(), s.end());
  };
}

struct EpochRecord {
  std::size_t epoch = 0;
  std::optional<double> train_loss;  // none for the pre-training record
  std::optional<double> val_hr20;
  std::optional<double> val_ndcg20;

  nlohmann::ordered_json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    return {{"epoch", epoch}, {"train_loss", opt(train_loss)}, {"val_hr20", opt(val_hr20)},
            {"val_ndcg20", opt(val_ndcg20)}};
  }
};

struct TrainResult {
  SasrecModel<float> model;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
};

struct TrainOptions {
  std::ostream* jsonl = nullptr;     // one JSON record per epoch
  std::ostream* progress = nullptr;  // human-readable
  /// Validation pool; ks is forced to {20}.
  eval::EvalProtocol validation{};
};

/// Adam over shuffled batches of windows; after every epoch the model is
/// scored on the validation purchases and the best epoch is kept. Epoch 0 is
/// the untrained initialisation. Without validation cases the last epoch wins.
inline TrainResult train_sasrec(const data::Dataset& ds, const data::Split& split, const SasrecConfig& cfg,
                                TrainOptions opts = {}) {
  cfg.validate();
  const auto windows = training_windows(ds, split, cfg);
  if (windows.empty()) throw ConfigError("sasrec: empty training split");

  TrainResult result{SasrecModel<float>(cfg, ds.vehicle_feature_dim()), {}, 0};
  auto& model = result.model;
  model.init(cfg.seed);
  nn::Adam<float> opt(model.params(), {cfg.lr});

  opts.validation.ks = {20};
  std::vector<eval::EvalCase> val_cases;
  if (!split.validation.empty()) {
    try {
      val_cases = eval::build_cases(ds, split.validation, opts.validation);
    } catch (const ProtocolError& e) {
      if (opts.progress) *opts.progress << "sasrec: validation disabled: " << e.what() << '\n';
    }
  }
  auto validate = [&](EpochRecord& rec) {
    if (val_cases.empty()) return;
    auto r = eval::evaluate(sasrec_scorer(model, ds), val_cases, opts.validation);
    rec.val_hr20 = r.at_k.at(20).hr;
    rec.val_ndcg20 = r.at_k.at(20).ndcg;
    if (std::isnan(*rec.val_hr20)) throw NumericError("sasrec: validation HR@20 is NaN");
  };
  auto emit = [&](const EpochRecord& rec) {
    result.log.push_back(rec);
    if (opts.jsonl) *opts.jsonl << rec.to_json().dump() << '\n';
    if (opts.progress) {
      *opts.progress << "sasrec epoch " << rec.epoch;
      if (rec.train_loss) *opts.progress << " loss " << *rec.train_loss;
      if (rec.val_hr20) *opts.progress << " val_hr20 " << *rec.val_hr20;
      *opts.progress << '\n';
    }
  };

  EpochRecord initial;
  validate(initial);
  emit(initial);
  std::optional<double> best = initial.val_hr20;
  std::vector<nn::Tensor<float>> best_values;
  for (const auto& p : model.params()) best_values.push_back(p->value);
  std::size_t stale = 0;

  nn::Rng rng(cfg.seed, 0x7361'7372);
  const auto& vehicles = ds.vehicles();
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const std::vector<data::Interaction>*> batch;
  std::vector<data::VehicleId> negatives;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    nn::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&windows[order[i]]);
      const auto weights = batch_weights<float>(batch, cfg.bid_loss_weight);
      double batch_loss = 0;
      try {
        for (std::size_t i = start; i < end; ++i) {
          const auto& w = windows[order[i]];
          // Negatives are drawn for every position, bid targets included, so
          // the stream consumed does not depend on λ.
          negatives.resize((w.size() - 1) * cfg.negatives_per_position);
          for (auto& v : negatives) v = vehicles[rng.below(vehicles.size())].id;
          nn::Graph<float> g({true, nn::derive_seed(cfg.seed, epoch, order[i])});
          auto loss = window_loss<float>(g, model, ds, w, negatives, weights);
          g.backward(loss);
          batch_loss += loss.value()[0];
        }
        opt.step(model.params());
      } catch (const NumericError& e) {
        throw NumericError("sasrec: epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / cfg.batch_size) + " (" + std::to_string(end - start) +
                           " windows): " + e.what());
      }
      loss_sum += batch_loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    validate(rec);
    emit(rec);
    const bool improved = !rec.val_hr20 || !best || *rec.val_hr20 > *best;
    if (improved) {
      best = rec.val_hr20;
      result.best_epoch = epoch;
      for (std::size_t i = 0; i < model.params().size(); ++i) best_values[i] = model.params()[i].value;
      stale = 0;
    } else if (cfg.patience != 0 && ++stale >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < model.params().size(); ++i) model.params()[i].value = best_values[i];
  return result;
}

}  // namespace arec::sasrec
