#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "arec/baselines/pointwise.hpp"
#include "arec/data/synthetic.hpp"
#include "arec/nbo/contracts.hpp"
#include "arec/nbo/encoding.hpp"
#include "arec/nbo/model.hpp"
#include "arec/nn/attention.hpp"
#include "arec/nn/grad_check.hpp"
#include "arec/nn/init.hpp"
#include "arec/nn/ops.hpp"
#include "arec/sasrec/model.hpp"
#include "arec/sasrec/train.hpp"
#include "json.hpp"

namespace arec::verify {

struct LayerCheck {
  std::string name;
  double max_rel_error = 0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
  bool passed = false;

  nlohmann::ordered_json to_json() const {
    return {{"layer", name}, {"max_rel_error", max_rel_error}, {"worst_parameter", worst_parameter},
            {"coordinates", coordinates}, {"passed", passed}};
  }
};

struct GradCheckOptions {
  double epsilon = 1e-4;
  double tolerance = 1e-5;
  /// Name of a check whose analytic gradient gets corrupted; a negative
  /// control for the harness itself. Empty leaves every check intact.
  std::string inject_fault;
};

namespace detail {

using P = nn::Parameter<double>;
using G = nn::Graph<double>;
using V = nn::Var<double>;

inline nn::Tensor<double> random_matrix(std::size_t r, std::size_t c, nn::Rng& rng) {
  auto t = nn::Tensor<double>::matrix(r, c);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

/// Fixed random projection to a scalar, so every output coordinate matters.
inline V project(G& g, V x) {
  nn::Rng rng(5, x.rows() * 131 + x.cols());
  return nn::sum(nn::row_dot(x, g.constant(random_matrix(x.rows(), x.cols(), rng))));
}

/// Small random values in every zero-initialised parameter, so biases and
/// gains are checked away from their special starting points.
inline void perturb_zeros(nn::ParameterSet<double>& ps, std::uint64_t seed) {
  nn::Rng rng(seed, 0x7a);
  for (auto& p : ps) {
    bool all_zero = true;
    for (double v : p->value.values()) all_zero = all_zero && v == 0.0;
    if (!all_zero) continue;
    for (auto& v : p->value.values()) v = rng.uniform(-0.1, 0.1);
  }
}

class Suite {
 public:
  explicit Suite(GradCheckOptions opts) : opts_(std::move(opts)) {}

  void run(const std::string& name, nn::ParameterSet<double>& ps, const std::function<V(G&)>& build) {
    const bool corrupt = name == opts_.inject_fault;
    nn::LossFn<double> fn = [&](bool with_grad) {
      G g;
      auto loss = build(g);
      if (with_grad) {
        g.backward(loss);
        if (corrupt) {
          auto& grad = ps[0].grad;
          grad[0] += 0.5 * (std::abs(grad[0]) + 1.0);
        }
      }
      return loss.value()[0];
    };
    auto r = nn::grad_check(fn, ps, opts_.epsilon);
    results_.push_back({name, r.max_rel_error, r.worst_parameter, r.coordinates,
                        std::isfinite(r.max_rel_error) && r.max_rel_error < opts_.tolerance});
  }

  std::vector<LayerCheck> take() { return std::move(results_); }

 private:
  GradCheckOptions opts_;
  std::vector<LayerCheck> results_;
};

}  // namespace detail

/// Names of every check, in run order.
inline std::vector<std::string> gradcheck_layer_names() {
  return {"linear",        "relu",         "scale",          "add",          "layer_norm",
          "softmax_rows",  "gather_rows",  "concat_cols",    "mask_rows",    "row_dot",
          "bce_with_logits", "softmax_cross_entropy", "causal_self_attention",
          "sasrec_auc_loss", "pointwise_loss", "nbo_loss"};
}

/// Per-op checks, then the full training losses of the three models, all in
/// 64-bit with dropout off.
inline std::vector<LayerCheck> run_gradcheck_suite(const GradCheckOptions& opts = {}) {
  using namespace detail;
  Suite s(opts);
  nn::Rng rng(2024);
  auto fresh = [&](std::initializer_list<std::tuple<const char*, std::size_t, std::size_t>> shapes) {
    nn::ParameterSet<double> ps;
    for (auto [n, r, c] : shapes) ps.add(n, random_matrix(r, c, rng));
    return ps;
  };

  {
    auto ps = fresh({{"x", 3, 4}, {"w", 4, 5}, {"b", 1, 5}});
    s.run("linear", ps, [&](G& g) { return project(g, nn::linear(g.param(ps[0]), g.param(ps[1]), g.param(ps[2]))); });
  }
  {
    auto ps = fresh({{"x", 4, 6}});
    s.run("relu", ps, [&](G& g) { return project(g, nn::relu(g.param(ps[0]))); });
  }
  {
    auto ps = fresh({{"x", 2, 3}});
    s.run("scale", ps, [&](G& g) { return project(g, nn::scale(g.param(ps[0]), 1.7)); });
  }
  {
    auto ps = fresh({{"a", 3, 4}, {"b", 3, 4}, {"row", 1, 4}});
    s.run("add", ps, [&](G& g) {
      return project(g, nn::add_row(nn::add(g.param(ps[0]), g.param(ps[1])), g.param(ps[2])));
    });
  }
  {
    auto ps = fresh({{"x", 3, 5}, {"gain", 1, 5}, {"bias", 1, 5}});
    s.run("layer_norm", ps, [&](G& g) {
      return project(g, nn::layer_norm(g.param(ps[0]), g.param(ps[1]), g.param(ps[2])));
    });
  }
  {
    auto ps = fresh({{"x", 3, 4}});
    s.run("softmax_rows", ps, [&](G& g) { return project(g, nn::softmax_rows(g.param(ps[0]))); });
  }
  {
    auto ps = fresh({{"table", 5, 3}});
    s.run("gather_rows", ps, [&](G& g) { return project(g, nn::gather_rows(g.param(ps[0]), {4, 0, 4, 2})); });
  }
  {
    auto ps = fresh({{"left", 4, 3}, {"right", 4, 2}});
    s.run("concat_cols", ps, [&](G& g) {
      return project(g, nn::concat_cols<double>({g.param(ps[0]), g.param(ps[1])}));
    });
  }
  {
    auto ps = fresh({{"x", 4, 3}});
    s.run("mask_rows", ps, [&](G& g) { return project(g, nn::mask_rows(g.param(ps[0]), {1.0, 0.0, 1.0, 1.0})); });
  }
  {
    auto ps = fresh({{"a", 4, 3}, {"b", 4, 3}});
    s.run("row_dot", ps, [&](G& g) { return project(g, nn::row_dot(g.param(ps[0]), g.param(ps[1]))); });
  }
  {
    auto ps = fresh({{"scores", 6, 1}});
    s.run("bce_with_logits", ps, [&](G& g) {
      return nn::bce_with_logits(g.param(ps[0]), {1, 0, 1, 0, 0, 1}, {1, 1, 0.5, 0.5, 0, 2});
    });
  }
  {
    auto ps = fresh({{"logits", 3, 5}});
    s.run("softmax_cross_entropy", ps, [&](G& g) {
      return nn::softmax_cross_entropy(g.param(ps[0]), {4, 0, 2}, {1.0, 0.5, 1.0});
    });
  }
  {
    nn::ParameterSet<double> ps;
    const std::size_t d = 6;
    auto& x = ps.add("x", random_matrix(5, d, rng));
    nn::AttentionParams<double> ap{};
    ap.wq = &ps.add("wq", nn::init::xavier_uniform<double>(d, d, rng));
    ap.bq = &ps.add("bq", nn::init::normal<double>(1, d, 0.1, rng));
    ap.wk = &ps.add("wk", nn::init::xavier_uniform<double>(d, d, rng));
    ap.wv = &ps.add("wv", nn::init::xavier_uniform<double>(d, d, rng));
    ap.bv = &ps.add("bv", nn::init::normal<double>(1, d, 0.1, rng));
    ap.wo = &ps.add("wo", nn::init::xavier_uniform<double>(d, d, rng));
    ap.bo = &ps.add("bo", nn::init::normal<double>(1, d, 0.1, rng));
    s.run("causal_self_attention", ps, [&](G& g) {
      return project(g, nn::masked_self_attention(g.param(x), ap, 3, {0, 1, 1, 1, 1}));
    });
  }

  // Full models on toy data.
  data::SyntheticConfig dc;
  dc.n_dealers = 30;
  dc.n_vehicles = 600;
  dc.dealer_feature_dim = 4;
  dc.vehicle_feature_dim = 5;
  dc.seed = 8;
  const auto world = data::generate_synthetic(dc);
  const auto& ds = world.dataset;
  {
    sasrec::SasrecConfig cfg;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.max_seq_len = 6;
    cfg.dropout = 0.0;
    cfg.negatives_per_position = 2;
    sasrec::SasrecModel<double> m(cfg, ds.vehicle_feature_dim());
    m.init(9);
    perturb_zeros(m.params(), 10);
    using data::Relation;
    // Two dealers, mixed relations, one window each.
    const std::vector<data::Interaction> w0{{0, 1, 1, Relation::purchase}, {0, 2, 2, Relation::bid},
                                            {0, 3, 3, Relation::purchase}, {0, 4, 4, Relation::bid},
                                            {0, 5, 5, Relation::purchase}};
    const std::vector<data::Interaction> w1{{1, 7, 1, Relation::bid}, {1, 8, 2, Relation::purchase},
                                            {1, 9, 3, Relation::purchase}};
    const std::vector<data::VehicleId> n0{10, 11, 12, 13, 14, 15, 16, 17}, n1{20, 21, 22, 23};
    std::vector<const std::vector<data::Interaction>*> batch{&w0, &w1};
    const auto tw = sasrec::batch_weights<double>(batch, 0.5);
    s.run("sasrec_auc_loss", m.params(), [&](G& g) {
      return nn::add(sasrec::window_loss<double>(g, m, ds, w0, n0, tw), sasrec::window_loss<double>(g, m, ds, w1, n1, tw));
    });
  }
  {
    baselines::PointwiseModel<double> m(ds.dealer_feature_dim(), ds.vehicle_feature_dim(), 8, 6);
    m.init_xavier(3);
    perturb_zeros(m.params(), 4);
    using data::Relation;
    const std::vector<data::Interaction> rows{
        {0, 1, 1, Relation::purchase}, {0, 40, 1, Relation::purchase}, {2, 3, 2, Relation::bid}, {2, 90, 2, Relation::bid}};
    const std::vector<double> labels{1, 0, 1, 0};
    s.run("pointwise_loss", m.params(), [&](G& g) { return baselines::pointwise_loss<double>(g, m, ds, rows, labels); });
  }
  {
    nbo::ContractSyntheticConfig cc;
    cc.n_records = 4;
    cc.num_classes = 6;
    cc.occupations = 3;
    cc.regions = 3;
    cc.fuel_types = 2;
    const auto t = nbo::generate_contracts(cc);
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const auto enc = nbo::ContractEncoder::fit(t, rows);
    nbo::NboConfig cfg;
    cfg.numeric_widths = {6, 4};
    nbo::NboModel<double> m(enc, cfg);
    m.init(7);
    perturb_zeros(m.params(), 8);
    std::vector<nbo::EncodedContract> batch;
    for (const auto& c : t.rows) batch.push_back(enc.encode(c));
    s.run("nbo_loss", m.params(), [&](G& g) { return nbo::nbo_loss<double>(g, m, batch); });
  }
  return s.take();
}

inline bool all_passed(const std::vector<LayerCheck>& checks) {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return !checks.empty();
}

}  // namespace arec::verify
