#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/error.hpp"
#include "arec/eval/metrics.hpp"
#include "arec/nn/attention.hpp"
#include "arec/nn/checkpoint.hpp"
#include "arec/nn/graph.hpp"
#include "arec/nn/init.hpp"
#include "arec/nn/ops.hpp"
#include "arec/sasrec/config.hpp"

namespace arec::sasrec {

inline constexpr const char* kSasrecKind = "sasrec-auc";

/// A chronological history, already truncated: one feature row and one
/// relation per entry, oldest first.
template <typename T>
struct Sequence {
  nn::Tensor<T> features;  // L×F, unset when L = 0
  std::vector<data::Relation> relations;

  std::size_t size() const noexcept { return relations.size(); }
};

/// The most recent `max_len` entries of `history` as model input.
template <typename T>
Sequence<T> make_sequence(const data::Dataset& ds, std::span<const data::Interaction> history, std::size_t max_len) {
  if (history.size() > max_len) history = history.subspan(history.size() - max_len);
  Sequence<T> s;
  if (history.empty()) return s;
  s.features = nn::Tensor<T>::matrix(history.size(), ds.vehicle_feature_dim());
  for (std::size_t i = 0; i < history.size(); ++i) {
    auto src = ds.vehicle_features(history[i].vehicle);
    std::transform(src.begin(), src.end(), s.features.row(i).begin(), [](float f) { return static_cast<T>(f); });
    s.relations.push_back(history[i].relation);
  }
  return s;
}

/// Attribute-aware SASRec over purchase and bid histories. Item vectors are
/// features·W_F on both the input and the scoring side.
template <typename T>
class SasrecModel {
 public:
  SasrecModel(SasrecConfig config, std::size_t feature_dim) : config_(config), feature_dim_(feature_dim) {
    config_.validate();
    if (feature_dim_ == 0) throw ConfigError("sasrec: vehicles need at least one feature");
    const std::size_t d = config_.embed_dim, n = config_.max_seq_len;
    wf_ = &params_.add("item_projection", nn::Tensor<T>::matrix(feature_dim_, d));
    pos_ = &params_.add("positions", nn::Tensor<T>::matrix(n, d));
    rel_ = &params_.add("relations", nn::Tensor<T>::matrix(2, d));
    for (std::size_t b = 0; b < config_.blocks; ++b) {
      const std::string p = "block" + std::to_string(b) + ".";
      Block blk;
      blk.ln1_g = &params_.add(p + "ln1.gain", nn::Tensor<T>::matrix(1, d, T{1}));
      blk.ln1_b = &params_.add(p + "ln1.bias", nn::Tensor<T>::matrix(1, d));
      blk.attn.wq = &params_.add(p + "attn.wq", nn::Tensor<T>::matrix(d, d));
      blk.attn.bq = &params_.add(p + "attn.bq", nn::Tensor<T>::matrix(1, d));
      blk.attn.wk = &params_.add(p + "attn.wk", nn::Tensor<T>::matrix(d, d));
      blk.attn.wv = &params_.add(p + "attn.wv", nn::Tensor<T>::matrix(d, d));
      blk.attn.bv = &params_.add(p + "attn.bv", nn::Tensor<T>::matrix(1, d));
      blk.attn.wo = &params_.add(p + "attn.wo", nn::Tensor<T>::matrix(d, d));
      blk.attn.bo = &params_.add(p + "attn.bo", nn::Tensor<T>::matrix(1, d));
      blk.ln2_g = &params_.add(p + "ln2.gain", nn::Tensor<T>::matrix(1, d, T{1}));
      blk.ln2_b = &params_.add(p + "ln2.bias", nn::Tensor<T>::matrix(1, d));
      blk.ff1_w = &params_.add(p + "ffn.w1", nn::Tensor<T>::matrix(d, d));
      blk.ff1_b = &params_.add(p + "ffn.b1", nn::Tensor<T>::matrix(1, d));
      blk.ff2_w = &params_.add(p + "ffn.w2", nn::Tensor<T>::matrix(d, d));
      blk.ff2_b = &params_.add(p + "ffn.b2", nn::Tensor<T>::matrix(1, d));
      blocks_.push_back(blk);
    }
    lnf_g_ = &params_.add("final_ln.gain", nn::Tensor<T>::matrix(1, d, T{1}));
    lnf_b_ = &params_.add("final_ln.bias", nn::Tensor<T>::matrix(1, d));
  }

  SasrecModel(SasrecModel&&) noexcept = default;
  SasrecModel& operator=(SasrecModel&&) noexcept = default;

  /// Xavier for every projection, N(0, 0.02²) for positions and relations.
  /// Without this call all weights are zero and every score ties.
  void init(std::uint64_t seed) {
    nn::Rng rng(seed, 0x5a5);
    const std::size_t d = config_.embed_dim;
    wf_->value = nn::init::xavier_uniform<T>(feature_dim_, d, rng);
    pos_->value = nn::init::normal<T>(config_.max_seq_len, d, nn::init::kEmbeddingStd, rng);
    rel_->value = nn::init::normal<T>(2, d, nn::init::kEmbeddingStd, rng);
    for (auto& b : blocks_) {
      for (auto* w : {b.attn.wq, b.attn.wk, b.attn.wv, b.attn.wo, b.ff1_w, b.ff2_w})
        w->value = nn::init::xavier_uniform<T>(d, d, rng);
    }
  }

  const SasrecConfig& config() const noexcept { return config_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  nn::ParameterSet<T>& params() noexcept { return params_; }
  const nn::ParameterSet<T>& params() const noexcept { return params_; }

  /// Hidden states of the valid positions [L×d]. With left padding to n the
  /// L entries sit at positions n−L..n−1; padded rows are fully masked out of
  /// attention and so never influence valid rows, which lets them be skipped.
  nn::Var<T> forward(nn::Graph<T>& g, const Sequence<T>& seq) const {
    const std::size_t len = seq.size(), n = config_.max_seq_len;
    if (len == 0) throw ArgumentError("sasrec: forward over an empty sequence");
    if (len > n) throw ArgumentError("sasrec: sequence longer than max_seq_len");
    if (seq.features.cols() != feature_dim_) throw DimensionError("sasrec: feature length mismatch");
    std::vector<std::size_t> positions(len), relations(len);
    for (std::size_t i = 0; i < len; ++i) {
      positions[i] = n - len + i;
      relations[i] = static_cast<std::size_t>(seq.relations[i]);
    }
    auto x = nn::matmul(g.constant(seq.features), p(g, wf_));
    x = nn::add(x, nn::gather_rows(p(g, pos_), std::move(positions)));
    x = nn::add(x, nn::gather_rows(p(g, rel_), std::move(relations)));
    x = nn::dropout(x, config_.dropout);
    const std::vector<std::uint8_t> valid(len, 1);
    for (const auto& b : blocks_) {
      auto a = nn::layer_norm(x, p(g, b.ln1_g), p(g, b.ln1_b));
      a = nn::masked_self_attention(a, b.attn, config_.heads, valid);
      x = nn::add(x, nn::dropout(a, config_.dropout));
      auto f = nn::layer_norm(x, p(g, b.ln2_g), p(g, b.ln2_b));
      f = nn::relu(nn::linear(f, p(g, b.ff1_w), p(g, b.ff1_b)));
      f = nn::linear(f, p(g, b.ff2_w), p(g, b.ff2_b));
      x = nn::add(x, nn::dropout(f, config_.dropout));
    }
    return nn::layer_norm(x, p(g, lnf_g_), p(g, lnf_b_));
  }

  /// Item vectors features·W_F for a candidate feature matrix [C×F].
  nn::Var<T> item_vectors(nn::Graph<T>& g, nn::Tensor<T> features) const {
    if (features.cols() != feature_dim_) throw DimensionError("sasrec: feature length mismatch");
    return nn::matmul(g.constant(std::move(features)), p(g, wf_));
  }

  /// Hidden states [n×d] in left-padded layout; padding rows are zero.
  nn::Tensor<T> encode_history(const Sequence<T>& seq) const {
    const std::size_t n = config_.max_seq_len, d = config_.embed_dim;
    auto out = nn::Tensor<T>::matrix(n, d);
    if (seq.size() == 0) return out;
    nn::Graph<T> g;
    const auto& h = forward(g, seq).value();
    std::copy(h.values().begin(), h.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>((n - seq.size()) * d));
    return out;
  }

  /// Hidden state at the last position; zero for an empty history.
  std::vector<T> query(const Sequence<T>& seq) const {
    if (seq.size() == 0) return std::vector<T>(config_.embed_dim, T{0});
    nn::Graph<T> g;
    auto h = forward(g, seq).value().row(seq.size() - 1);
    return {h.begin(), h.end()};
  }

  /// score_c = query · (features_c·W_F).
  std::vector<T> score_candidates(std::span<const T> query, const nn::Tensor<T>& candidates) const {
    if (candidates.rank() != 2 || candidates.rows() == 0) throw ArgumentError("sasrec: no candidates to score");
    if (candidates.cols() != feature_dim_) {
      throw DimensionError("sasrec: candidate feature length " + std::to_string(candidates.cols()) + " != " +
                           std::to_string(feature_dim_));
    }
    if (query.size() != config_.embed_dim) throw DimensionError("sasrec: query width mismatch");
    const auto e = nn::matmul(candidates, wf_->value);
    std::vector<T> s(candidates.rows(), T{0});
    for (std::size_t c = 0; c < s.size(); ++c) {
      auto row = e.row(c);
      for (std::size_t j = 0; j < row.size(); ++j) s[c] += query[j] * row[j];
    }
    return s;
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint c;
    c.kind = kSasrecKind;
    c.hyperparams = config_.to_json();
    c.hyperparams["feature_dim"] = feature_dim_;
    c.blocks = nn::export_parameters(params_);
    return c;
  }

  static SasrecModel from_checkpoint(const nn::Checkpoint& c) {
    if (c.kind != kSasrecKind) throw ArgumentError("checkpoint kind '" + c.kind + "' is not " + kSasrecKind);
    auto h = c.hyperparams;
    const auto feature_dim = h.at("feature_dim").get<std::size_t>();
    h.erase("feature_dim");
    SasrecModel m(SasrecConfig::from_json(h), feature_dim);
    nn::import_parameters(c, m.params_);
    return m;
  }

  /// Same architecture and values in another scalar type.
  template <typename U>
  SasrecModel<U> cast() const {
    SasrecModel<U> m(config_, feature_dim_);
    for (std::size_t i = 0; i < params_.size(); ++i) m.params()[i].value = params_[i].value.template cast<U>();
    return m;
  }

 private:
  struct Block {
    nn::Parameter<T>* ln1_g;
    nn::Parameter<T>* ln1_b;
    nn::AttentionParams<T> attn;
    nn::Parameter<T>* ln2_g;
    nn::Parameter<T>* ln2_b;
    nn::Parameter<T>* ff1_w;
    nn::Parameter<T>* ff1_b;
    nn::Parameter<T>* ff2_w;
    nn::Parameter<T>* ff2_b;
  };

  static nn::Var<T> p(nn::Graph<T>& g, nn::Parameter<T>* param) { return g.param(*param); }

  SasrecConfig config_;
  std::size_t feature_dim_;
  nn::ParameterSet<T> params_;
  nn::Parameter<T>* wf_ = nullptr;
  nn::Parameter<T>* pos_ = nullptr;
  nn::Parameter<T>* rel_ = nullptr;
  std::vector<Block> blocks_;
  nn::Parameter<T>* lnf_g_ = nullptr;
  nn::Parameter<T>* lnf_b_ = nullptr;
};

struct Recommendation {
  data::VehicleId vehicle;
  double score;
};

/// Top-K candidates by descending score, ties by ascending vehicle id.
template <typename T>
std::vector<Recommendation> recommend(const SasrecModel<T>& model, const Sequence<T>& history,
                                      std::span<const data::VehicleId> candidates,
                                      const nn::Tensor<T>& candidate_features, std::size_t k) {
  if (k > candidates.size()) {
    throw ArgumentError("K=" + std::to_string(k) + " exceeds the " + std::to_string(candidates.size()) +
                        " candidates");
  }
  if (candidate_features.rows() != candidates.size()) throw DimensionError("one feature row per candidate required");
  const auto q = model.query(history);
  const auto s = model.score_candidates(q, candidate_features);
  const auto order = eval::ranking_order<T>(s, candidates);
  std::vector<Recommendation> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({candidates[order[i]], static_cast<double>(s[order[i]])});
  return out;
}

/// Candidate feature matrix in the scalar type of the model.
template <typename T>
nn::Tensor<T> candidate_features(const data::Dataset& ds, std::span<const data::VehicleId> candidates) {
  auto m = nn::Tensor<T>::matrix(candidates.size(), ds.vehicle_feature_dim());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto src = ds.vehicle_features(candidates[i]);
    std::transform(src.begin(), src.end(), m.row(i).begin(), [](float f) { return static_cast<T>(f); });
  }
  return m;
}

}  // namespace arec::sasrec
