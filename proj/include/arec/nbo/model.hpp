#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "arec/error.hpp"
#include "arec/eval/protocol.hpp"
#include "arec/json_config.hpp"
#include "arec/nbo/contracts.hpp"
#include "arec/nbo/encoding.hpp"
#include "arec/nn/adam.hpp"
#include "arec/nn/checkpoint.hpp"
#include "arec/nn/graph.hpp"
#include "arec/nn/init.hpp"
#include "arec/nn/ops.hpp"
#include "arec/nn/rng.hpp"
#include "json.hpp"

namespace arec::nbo {

inline constexpr const char* kNboKind = "nbo";
inline constexpr std::size_t kMaxEmbeddingDim = 32;
inline constexpr std::size_t kContractionTarget = 64;

struct NboConfig {
  /// One per categorical column followed by the previous class; empty derives
  /// min(32, ceil(cardinality / 2)).
  std::vector<std::size_t> embedding_dims;
  std::vector<std::size_t> numeric_widths{32};
  /// Empty derives the halving stack from the concatenated width.
  std::vector<std::size_t> contraction_widths;
  /// 0 takes the class count from the schema.
  std::size_t num_classes = 0;
  double lr = 3e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  /// Epochs without a validation HR@5 improvement before stopping; 0 disables.
  std::size_t patience = 8;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
  double test_fraction = 0.2;

  void validate() const {
    if (num_classes == 1) throw ConfigError("nbo: num_classes must be >= 2");
    if (!(lr > 0)) throw ConfigError("nbo: lr must be positive");
    if (batch_size == 0) throw ConfigError("nbo: batch_size must be positive");
    if (!(train_fraction > 0 && validation_fraction >= 0 && test_fraction >= 0) ||
        std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
      throw ConfigError("nbo: split fractions must be non-negative and sum to 1");
    }
    auto positive = [](const std::vector<std::size_t>& v) { return std::all_of(v.begin(), v.end(), [](auto w) { return w > 0; }); };
    if (!positive(embedding_dims) || !positive(numeric_widths) || !positive(contraction_widths)) {
      throw ConfigError("nbo: layer widths must be positive");
    }
  }

  nlohmann::json to_json() const {
    return {{"embedding_dims", embedding_dims}, {"numeric_widths", numeric_widths},
            {"contraction_widths", contraction_widths}, {"num_classes", num_classes}, {"lr", lr},
            {"epochs", epochs}, {"batch_size", batch_size}, {"patience", patience}, {"seed", seed},
            {"train_fraction", train_fraction}, {"validation_fraction", validation_fraction},
            {"test_fraction", test_fraction}};
  }

  static NboConfig from_json(const nlohmann::json& j) {
    NboConfig c;
    JsonFields(j, "nbo")
        .get("embedding_dims", c.embedding_dims)
        .get("numeric_widths", c.numeric_widths)
        .get("contraction_widths", c.contraction_widths)
        .get("num_classes", c.num_classes)
        .get("lr", c.lr)
        .get("epochs", c.epochs)
        .get("batch_size", c.batch_size)
        .get("patience", c.patience)
        .get("seed", c.seed)
        .get("train_fraction", c.train_fraction)
        .get("validation_fraction", c.validation_fraction)
        .get("test_fraction", c.test_fraction)
        .finish();
    c.validate();
    return c;
  }
};

/// Halve from `width` until the result is at most 64. At least one layer is
/// produced even when the input is already narrow.
inline std::vector<std::size_t> contraction_stack(std::size_t width) {
  std::vector<std::size_t> out;
  do {
    width = std::max<std::size_t>(1, width / 2);
    out.push_back(width);
  } while (width > kContractionTarget);
  return out;
}

inline std::size_t default_embedding_dim(std::size_t cardinality) {
  return std::min(kMaxEmbeddingDim, (cardinality + 1) / 2);
}

/// Fully resolved layer sizes.
struct NboArchitecture {
  std::vector<std::string> embedding_names;
  std::vector<std::size_t> cardinalities;
  std::vector<std::size_t> embedding_dims;
  std::size_t numeric_inputs = 0;
  std::vector<std::size_t> numeric_widths;
  std::vector<std::size_t> contraction_widths;
  std::size_t num_classes = 0;

  std::size_t concat_width() const {
    std::size_t w = std::accumulate(embedding_dims.begin(), embedding_dims.end(), std::size_t{0});
    if (numeric_inputs) w += numeric_widths.back();
    return w;
  }

  static NboArchitecture resolve(const ContractEncoder& enc, const NboConfig& cfg) {
    cfg.validate();
    NboArchitecture a;
    a.num_classes = enc.num_classes();
    if (cfg.num_classes != 0 && cfg.num_classes != a.num_classes) {
      throw ConfigError("nbo: num_classes " + std::to_string(cfg.num_classes) + " disagrees with schema's " +
                        std::to_string(a.num_classes));
    }
    a.embedding_names = enc.schema.names(ColumnKind::categorical);
    a.embedding_names.push_back(enc.schema.names(ColumnKind::previous_class).front());
    for (const auto& v : enc.vocabularies) a.cardinalities.push_back(v.size());
    a.cardinalities.push_back(a.num_classes);
    if (cfg.embedding_dims.empty()) {
      for (auto c : a.cardinalities) a.embedding_dims.push_back(default_embedding_dim(c));
    } else if (cfg.embedding_dims.size() != a.cardinalities.size()) {
      throw ConfigError("nbo: " + std::to_string(cfg.embedding_dims.size()) + " embedding dims given for " +
                        std::to_string(a.cardinalities.size()) + " categorical inputs");
    } else {
      a.embedding_dims = cfg.embedding_dims;
    }
    a.numeric_inputs = enc.num_numerical();
    if (a.numeric_inputs) {
      if (cfg.numeric_widths.empty()) throw ConfigError("nbo: numeric_widths must be non-empty with numerical columns");
      a.numeric_widths = cfg.numeric_widths;
    }
    a.contraction_widths = cfg.contraction_widths.empty() ? contraction_stack(a.concat_width()) : cfg.contraction_widths;
    return a;
  }

  nlohmann::json to_json() const {
    return {{"embedding_names", embedding_names}, {"cardinalities", cardinalities},
            {"embedding_dims", embedding_dims}, {"numeric_inputs", numeric_inputs},
            {"numeric_widths", numeric_widths}, {"contraction_widths", contraction_widths},
            {"num_classes", num_classes}};
  }

  static NboArchitecture from_json(const nlohmann::json& j) {
    NboArchitecture a;
    j.at("embedding_names").get_to(a.embedding_names);
    j.at("cardinalities").get_to(a.cardinalities);
    j.at("embedding_dims").get_to(a.embedding_dims);
    j.at("numeric_inputs").get_to(a.numeric_inputs);
    j.at("numeric_widths").get_to(a.numeric_widths);
    j.at("contraction_widths").get_to(a.contraction_widths);
    j.at("num_classes").get_to(a.num_classes);
    return a;
  }
};

/// Embedding per categorical input ⊕ numerical encoder, then the contraction
/// stack and a linear class head.
template <typename T>
class NboModel {
 public:
  NboModel(ContractEncoder encoder, NboArchitecture arch) : encoder_(std::move(encoder)), arch_(std::move(arch)) {
    if (arch_.cardinalities.size() != arch_.embedding_dims.size() ||
        arch_.cardinalities.size() != encoder_.vocabularies.size() + 1 ||
        arch_.numeric_inputs != encoder_.num_numerical() || arch_.num_classes != encoder_.num_classes()) {
      throw ConfigError("nbo: architecture does not match the encoder");
    }
    for (std::size_t i = 0; i < arch_.cardinalities.size(); ++i)
      params_.add("embed." + arch_.embedding_names[i], nn::Tensor<T>::matrix(arch_.cardinalities[i], arch_.embedding_dims[i]));
    std::size_t in = arch_.numeric_inputs;
    for (std::size_t i = 0; in && i < arch_.numeric_widths.size(); ++i) {
      add_linear("numeric.fc" + std::to_string(i), in, arch_.numeric_widths[i]);
      in = arch_.numeric_widths[i];
    }
    in = arch_.concat_width();
    for (std::size_t i = 0; i < arch_.contraction_widths.size(); ++i) {
      add_linear("contract.fc" + std::to_string(i), in, arch_.contraction_widths[i]);
      in = arch_.contraction_widths[i];
    }
    add_linear("head", in, arch_.num_classes);
  }

  NboModel(ContractEncoder encoder, const NboConfig& cfg)
      : NboModel(encoder, NboArchitecture::resolve(encoder, cfg)) {}

  /// Xavier weights, N(0, 0.1) embeddings, zero biases.
  void init(std::uint64_t seed) {
    nn::Rng rng(seed, 0x6e626f);
    for (auto& p : params_) {
      auto& t = p->value;
      if (p->name.starts_with("embed.")) {
        t = nn::init::normal<T>(t.rows(), t.cols(), 0.1, rng);
      } else if (p->name.ends_with(".w")) {
        t = nn::init::xavier_uniform<T>(t.rows(), t.cols(), rng);
      }
    }
  }

  const ContractEncoder& encoder() const noexcept { return encoder_; }
  const NboArchitecture& architecture() const noexcept { return arch_; }
  std::size_t num_classes() const noexcept { return arch_.num_classes; }
  nn::ParameterSet<T>& params() noexcept { return params_; }
  const nn::ParameterSet<T>& params() const noexcept { return params_; }

  /// Class logits [batch×C].
  nn::Var<T> logits(nn::Graph<T>& g, std::span<const EncodedContract> batch) const {
    if (batch.empty()) throw ArgumentError("nbo: empty batch");
    const std::size_t cats = encoder_.vocabularies.size();
    std::vector<nn::Var<T>> parts;
    for (std::size_t c = 0; c <= cats; ++c) {
      std::vector<std::size_t> idx;
      idx.reserve(batch.size());
      for (const auto& r : batch) {
        if (r.categorical.size() != cats || r.numerical.size() != arch_.numeric_inputs) {
          throw ConfigError("nbo: encoded record does not match the model's column counts");
        }
        const std::size_t v = c < cats ? r.categorical[c] : r.previous_class;
        if (v >= arch_.cardinalities[c]) throw ConfigError("nbo: index outside vocabulary of " + arch_.embedding_names[c]);
        idx.push_back(v);
      }
      parts.push_back(nn::gather_rows(p(g, "embed." + arch_.embedding_names[c]), std::move(idx)));
    }
    if (arch_.numeric_inputs) {
      auto x = nn::Tensor<T>::matrix(batch.size(), arch_.numeric_inputs);
      for (std::size_t i = 0; i < batch.size(); ++i)
        for (std::size_t j = 0; j < arch_.numeric_inputs; ++j) x(i, j) = static_cast<T>(batch[i].numerical[j]);
      auto h = g.constant(std::move(x));
      for (std::size_t i = 0; i < arch_.numeric_widths.size(); ++i) h = nn::relu(fc(g, "numeric.fc" + std::to_string(i), h));
      parts.push_back(h);
    }
    auto h = nn::concat_cols(parts);
    for (std::size_t i = 0; i < arch_.contraction_widths.size(); ++i) h = nn::relu(fc(g, "contract.fc" + std::to_string(i), h));
    return fc(g, "head", h);
  }

  /// Softmax class probabilities [batch×C].
  nn::Tensor<T> forward(std::span<const EncodedContract> batch) const {
    nn::Graph<T> g;
    return nn::softmax_rows(logits(g, batch)).value();
  }

  std::vector<double> probabilities(const Contract& c) const {
    const EncodedContract e = encoder_.encode(c);
    const auto out = forward(std::span<const EncodedContract>(&e, 1));
    return std::vector<double>(out.values().begin(), out.values().end());
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint c;
    c.kind = kNboKind;
    c.hyperparams = {{"architecture", arch_.to_json()}, {"encoder", encoder_.to_json()}};
    c.blocks = nn::export_parameters(params_);
    return c;
  }

  static NboModel from_checkpoint(const nn::Checkpoint& c) {
    if (c.kind != kNboKind) throw ArgumentError("checkpoint kind '" + c.kind + "' is not nbo");
    NboModel m(ContractEncoder::from_json(c.hyperparams.at("encoder")),
               NboArchitecture::from_json(c.hyperparams.at("architecture")));
    nn::import_parameters(c, m.params_);
    return m;
  }

  template <typename U>
  NboModel<U> cast() const {
    NboModel<U> m(encoder_, arch_);
    for (std::size_t i = 0; i < params_.size(); ++i) m.params()[i].value = params_[i].value.template cast<U>();
    return m;
  }

 private:
  void add_linear(const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name + ".w", nn::Tensor<T>::matrix(in, out));
    params_.add(name + ".b", nn::Tensor<T>::matrix(1, out));
  }

  // Graph nodes read parameters through a mutable pointer but only write grads.
  nn::Var<T> p(nn::Graph<T>& g, const std::string& name) const {
    return g.param(const_cast<nn::Parameter<T>&>(params_.at(name)));
  }

  nn::Var<T> fc(nn::Graph<T>& g, const std::string& name, nn::Var<T> x) const {
    return nn::linear(x, p(g, name + ".w"), p(g, name + ".b"));
  }

  ContractEncoder encoder_;
  NboArchitecture arch_;
  nn::ParameterSet<T> params_;
};

/// Mean cross-entropy of the true classes.
template <typename T>
nn::Var<T> nbo_loss(nn::Graph<T>& g, const NboModel<T>& model, std::span<const EncodedContract> batch) {
  std::vector<std::size_t> targets;
  for (const auto& r : batch) targets.push_back(r.target_class);
  std::vector<T> w(batch.size(), T{1} / static_cast<T>(batch.size()));
  return nn::softmax_cross_entropy(model.logits(g, batch), std::move(targets), std::move(w));
}

/// Scores over all C classes for one contract.
using ClassScorer = std::function<std::vector<double>(const Contract&)>;

/// Rank of the true class among all C classes, ties by ascending class id.
inline eval::EvalResult evaluate_nbo(const ClassScorer& scorer, const ContractTable& t,
                                     std::span<const std::size_t> rows, const std::vector<std::size_t>& ks = {5}) {
  if (rows.empty()) throw ProtocolError("nbo: empty test split");
  const std::size_t C = t.schema.num_classes;
  for (auto k : ks)
    if (k < 1 || k > C) throw ProtocolError("nbo: K=" + std::to_string(k) + " outside [1, " + std::to_string(C) + "]");
  std::vector<std::int64_t> ids(C);
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  std::vector<std::size_t> ranks;
  ranks.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto& c = t.rows.at(r);
    const auto s = scorer(c);
    if (s.size() != C) throw DimensionError("nbo: scorer returned " + std::to_string(s.size()) + " scores for " +
                                            std::to_string(C) + " classes");
    for (double v : s)
      if (std::isnan(v)) throw NumericError("nbo: NaN class score");
    ranks.push_back(eval::rank_of_positive<double>(s, c.target_class, ids));
  }
  return eval::summarize(std::move(ranks), ks);
}

template <typename T>
ClassScorer nbo_scorer(const NboModel<T>& model) {
  return [&model](const Contract& c) { return model.probabilities(c); };
}

struct NboEpochRecord {
  std::size_t epoch = 0;
  std::optional<double> train_loss;
  std::optional<double> val_hr5;
  std::optional<double> val_ndcg5;

  nlohmann::ordered_json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    return {{"epoch", epoch}, {"train_loss", opt(train_loss)}, {"val_hr5", opt(val_hr5)}, {"val_ndcg5", opt(val_ndcg5)}};
  }
};

struct NboTrainResult {
  NboModel<float> model;
  ContractSplit split;
  std::vector<NboEpochRecord> log;
  std::size_t best_epoch = 0;
  /// Classes with no training example; the head still scores them.
  std::vector<std::size_t> missing_classes;
};

struct NboTrainOptions {
  std::ostream* jsonl = nullptr;
  std::ostream* progress = nullptr;
};

/// Random split with the config seed, vocabularies and statistics from the
/// train rows, Adam on mean cross-entropy, best validation HR@5 kept (HR@C
/// when there are fewer than five classes).
inline NboTrainResult train_nbo(const ContractTable& t, const NboConfig& cfg, NboTrainOptions opts = {}) {
  cfg.validate();
  t.schema.validate();
  auto split = split_contracts(t.rows.size(), cfg.seed, cfg.train_fraction, cfg.validation_fraction);
  if (split.train.empty()) throw ConfigError("nbo: empty training split");
  auto encoder = ContractEncoder::fit(t, split.train);
  NboTrainResult result{NboModel<float>(encoder, cfg), std::move(split), {}, 0, {}};
  auto& model = result.model;
  model.init(cfg.seed);

  std::vector<bool> seen(t.schema.num_classes, false);
  for (auto r : result.split.train) seen[t.rows[r].target_class] = true;
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c]) result.missing_classes.push_back(c);
  if (!result.missing_classes.empty() && opts.progress) {
    *opts.progress << "nbo: warning: " << result.missing_classes.size()
                   << " classes have no training example and stay predictable only through the head bias\n";
  }

  std::vector<EncodedContract> train;
  for (auto r : result.split.train) train.push_back(encoder.encode(t.rows[r]));

  auto validate = [&](NboEpochRecord& rec) {
    if (result.split.validation.empty()) return;
    const std::size_t k = std::min<std::size_t>(5, t.schema.num_classes);
    auto r = evaluate_nbo(nbo_scorer(model), t, result.split.validation, {k});
    rec.val_hr5 = r.at_k.at(k).hr;
    rec.val_ndcg5 = r.at_k.at(k).ndcg;
  };
  auto emit = [&](const NboEpochRecord& rec) {
    result.log.push_back(rec);
    if (opts.jsonl) *opts.jsonl << rec.to_json().dump() << '\n';
    if (opts.progress) {
      *opts.progress << "nbo epoch " << rec.epoch;
      if (rec.train_loss) *opts.progress << " loss " << *rec.train_loss;
      if (rec.val_hr5) *opts.progress << " val_hr5 " << *rec.val_hr5;
      *opts.progress << '\n';
    }
  };

  NboEpochRecord initial;
  validate(initial);
  emit(initial);
  std::optional<double> best = initial.val_hr5;
  std::vector<nn::Tensor<float>> best_values;
  for (const auto& p : model.params()) best_values.push_back(p->value);
  std::size_t stale = 0;

  nn::Adam<float> opt(model.params(), {cfg.lr});
  nn::Rng rng(cfg.seed, 0x6e626f74);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EncodedContract> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    nn::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      try {
        nn::Graph<float> g({true, 0});
        auto loss = nbo_loss<float>(g, model, batch);
        g.backward(loss);
        opt.step(model.params());
        loss_sum += loss.value()[0];
      } catch (const NumericError& e) {
        throw NumericError("nbo: epoch " + std::to_string(epoch) + ", batch " + std::to_string(start / cfg.batch_size) +
                           ": " + e.what());
      }
      ++batches;
    }
    NboEpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    validate(rec);
    emit(rec);
    if (!rec.val_hr5 || !best || *rec.val_hr5 > *best) {
      best = rec.val_hr5;
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

}  // namespace arec::nbo
