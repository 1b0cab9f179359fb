#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "arec/baselines/pointwise.hpp"
#include "arec/baselines/popularity.hpp"
#include "arec/baselines/random.hpp"
#include "arec/cli/config.hpp"
#include "arec/data/csv.hpp"
#include "arec/data/split.hpp"
#include "arec/data/synthetic.hpp"
#include "arec/error.hpp"
#include "arec/eval/protocol.hpp"
#include "arec/nbo/baselines.hpp"
#include "arec/nbo/contracts.hpp"
#include "arec/nbo/model.hpp"
#include "arec/nn/checkpoint.hpp"
#include "arec/sasrec/model.hpp"
#include "arec/sasrec/train.hpp"
#include "arec/verify/gradcheck_suite.hpp"
#include "json.hpp"

namespace arec::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kIoFailure = 2, kNumericFailure = 3, kArgumentFailure = 4, kVerificationFailure = 5 };

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.jsonl";
inline constexpr const char* kStatsFile = "stats.json";

/// Auction data is a directory with interactions.csv; contract data one with
/// contracts.csv and contracts.schema.json.
inline bool is_contract_dir(const fs::path& dir) { return fs::exists(dir / "contracts.csv"); }

inline void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir.string());
}

inline nbo::ContractTable load_contract_dir(const fs::path& dir) {
  require_dir(dir);
  return nbo::load_contracts(dir / "contracts.csv", nbo::load_schema(dir / "contracts.schema.json"));
}

inline data::Dataset load_auction_dir(const fs::path& dir) {
  require_dir(dir);
  return data::load_interactions(dir);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

/// Human-readable field names, as in a dataset statistics table.
inline nlohmann::ordered_json stats_json(const data::DatasetStats& s) {
  return {{"Users", s.users},
          {"Items", s.items},
          {"Purchases", s.purchases},
          {"Biddings", s.biddings},
          {"Purchases Density (%)", data::round_to(s.purchase_density_pct, 3)},
          {"Biddings Density (%)", data::round_to(s.bidding_density_pct, 3)},
          {"User Features", s.user_features},
          {"Item Features", s.item_features},
          {"Unique Items (%)", data::round_to(s.unique_item_pct, 3)}};
}

inline nlohmann::ordered_json contract_stats_json(const nbo::ContractTable& t) {
  std::size_t repeats = 0;
  for (const auto& c : t.rows) repeats += c.previous_class == c.target_class;
  return {{"Records", t.rows.size()},
          {"Classes", t.schema.num_classes},
          {"Repeat Rate (%)", t.rows.empty() ? 0.0
                                             : data::round_to(100.0 * static_cast<double>(repeats) /
                                                                  static_cast<double>(t.rows.size()), 3)}};
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  fs::path out;
  std::string kind = "auctions";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> dealers, vehicles, records;
  bool deterministic = false;
};

inline int cmd_gen(const GenArgs& a, RunConfig rc, std::ostream& out, std::ostream& err) {
  if (a.kind == "contracts") {
    auto& c = rc.contracts;
    if (a.seed) c.seed = *a.seed;
    if (a.records) c.n_records = *a.records;
    if (a.deterministic) c.deterministic = true;
    const auto t = nbo::generate_contracts(c);
    nbo::write_contracts(a.out, t);
    const auto j = contract_stats_json(t);
    write_text(a.out / kStatsFile, j.dump(2) + "\n");
    out << j.dump(2) << '\n';
    err << "gen: wrote " << t.rows.size() << " contracts to " << a.out.string() << '\n';
    return kOk;
  }
  auto& s = rc.synthetic;
  if (a.seed) s.seed = *a.seed;
  if (a.dealers) s.n_dealers = *a.dealers;
  if (a.vehicles) s.n_vehicles = *a.vehicles;
  const auto world = data::generate_synthetic(s);
  data::write_dataset(a.out, world.dataset);
  const auto j = stats_json(data::stats(world.dataset));
  write_text(a.out / kStatsFile, j.dump(2) + "\n");
  out << j.dump(2) << '\n';
  err << "gen: wrote " << world.dataset.interactions().size() << " interactions to " << a.out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string model;
  fs::path data;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda;
  bool no_bid_input = false;
};

inline int cmd_train(const TrainArgs& a, RunConfig rc, std::ostream& out, std::ostream& err) {
  nlohmann::ordered_json summary{{"model", a.model}};
  if (a.model == nbo::kNboKind) {
    auto& cfg = rc.nbo;
    if (a.seed) cfg.seed = *a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    const auto t = load_contract_dir(a.data);
    fs::create_directories(a.out);
    std::ofstream log(a.out / kTrainLogFile, std::ios::trunc | std::ios::binary);
    auto r = nbo::train_nbo(t, cfg, {&log, &err});
    auto ckpt = r.model.to_checkpoint();
    ckpt.hyperparams["split"] = {{"seed", cfg.seed},
                                 {"train_fraction", cfg.train_fraction},
                                 {"validation_fraction", cfg.validation_fraction}};
    nn::save_checkpoint(a.out / kCheckpointFile, ckpt);
    summary["best_epoch"] = r.best_epoch;
    summary["epochs_run"] = r.log.size() - 1;
    summary["missing_classes"] = r.missing_classes;
  } else if (a.model == sasrec::kSasrecKind) {
    auto& cfg = rc.sasrec;
    if (a.seed) cfg.seed = *a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.lambda) cfg.bid_loss_weight = *a.lambda;
    if (a.no_bid_input) cfg.bids_in_input = false;
    cfg.validate();
    const auto ds = load_auction_dir(a.data);
    const auto split = data::leave_one_out_split(ds);
    fs::create_directories(a.out);
    std::ofstream log(a.out / kTrainLogFile, std::ios::trunc | std::ios::binary);
    sasrec::TrainOptions opts{&log, &err, {}};
    opts.validation.seed = rc.eval.protocol.seed;
    opts.validation.negatives = rc.eval.protocol.negatives;
    auto r = sasrec::train_sasrec(ds, split, cfg, opts);
    for (const auto& rec : r.log)
      if (rec.val_hr20 && std::isnan(*rec.val_hr20)) throw NumericError("validation HR@20 is NaN");
    nn::save_checkpoint(a.out / kCheckpointFile, r.model.to_checkpoint());
    summary["best_epoch"] = r.best_epoch;
    summary["epochs_run"] = r.log.size() - 1;
  } else if (a.model == baselines::kPointwiseKind) {
    auto& cfg = rc.pointwise;
    if (a.seed) cfg.seed = *a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    const auto ds = load_auction_dir(a.data);
    const auto split = data::leave_one_out_split(ds);
    fs::create_directories(a.out);
    auto m = baselines::train_pointwise(ds, split, cfg, &err);
    nn::save_checkpoint(a.out / kCheckpointFile, m.to_checkpoint());
  } else {
    throw ArgumentError("train: unknown model '" + a.model + "' (expected sasrec-auc, pointwise or nbo)");
  }
  summary["checkpoint"] = (a.out / kCheckpointFile).string();
  out << summary.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  fs::path data;
  std::optional<fs::path> checkpoint;
  std::vector<std::size_t> ks;
  std::optional<std::size_t> negatives;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> neighbours;
  std::string split = "test";
};

inline nn::Checkpoint require_checkpoint(const EvalArgs& a) {
  if (!a.checkpoint) throw ArgumentError("eval: --model " + a.model + " needs --checkpoint");
  return nn::load_checkpoint(*a.checkpoint);
}

inline int eval_contracts(const EvalArgs& a, const RunConfig& rc, std::ostream& out) {
  const auto t = load_contract_dir(a.data);
  const std::size_t C = t.schema.num_classes;
  auto ks = !a.ks.empty() ? a.ks : !rc.eval.ks.empty() ? rc.eval.ks : std::vector<std::size_t>{nbo::kNboTopK};
  std::uint64_t split_seed = rc.nbo.seed;
  double train_frac = rc.nbo.train_fraction, val_frac = rc.nbo.validation_fraction;
  std::optional<nbo::NboModel<float>> model;
  if (a.model == nbo::kNboKind) {
    const auto ckpt = require_checkpoint(a);
    model.emplace(nbo::NboModel<float>::from_checkpoint(ckpt));
    if (model->num_classes() != C) throw ArgumentError("eval: checkpoint has a different class count than the data");
    if (ckpt.hyperparams.contains("split")) {
      const auto& s = ckpt.hyperparams.at("split");
      split_seed = s.at("seed").get<std::uint64_t>();
      train_frac = s.at("train_fraction").get<double>();
      val_frac = s.at("validation_fraction").get<double>();
    }
  }
  const auto split = nbo::split_contracts(t.rows.size(), split_seed, train_frac, val_frac);
  const auto& rows = a.split == "validation" ? split.validation : split.test;
  const std::uint64_t seed = a.seed.value_or(rc.eval.protocol.seed);

  std::optional<nbo::KnnIndex> knn;
  nbo::ClassScorer scorer;
  if (a.model == nbo::kNboKind) {
    scorer = nbo::nbo_scorer(*model);
  } else if (a.model == "random") {
    scorer = nbo::random_class_scorer(C, seed);
  } else if (a.model == "repeat-top-pop") {
    scorer = nbo::repeat_top_pop_scorer(nbo::class_popularity(t, split.train));
  } else if (a.model == "knn") {
    knn.emplace(t, split.train);
    scorer = nbo::knn_scorer(*knn, C, a.neighbours.value_or(rc.eval.neighbours));
  } else {
    throw ArgumentError("eval: model '" + a.model + "' does not apply to contract data");
  }
  eval::EvalReport report;
  report.model = a.model;
  report.protocol.ks = ks;
  report.protocol.negatives = C - 1;  // full ranking: every other class
  report.protocol.seed = seed;
  report.result = nbo::evaluate_nbo(scorer, t, rows, ks);
  report.dataset = {{"records", t.rows.size()}, {"classes", C}, {"evaluated", rows.size()}};
  out << report.to_json().dump(2) << '\n';
  return kOk;
}

inline int cmd_eval(const EvalArgs& a, const RunConfig& rc, std::ostream& out, std::ostream& err) {
  if (a.split != "test" && a.split != "validation") throw ArgumentError("eval: --split must be test or validation");
  if (is_contract_dir(a.data)) return eval_contracts(a, rc, out);
  const auto ds = load_auction_dir(a.data);
  const auto split = data::leave_one_out_split(ds);
  eval::EvalProtocol protocol = rc.eval.protocol;
  protocol.ks = !a.ks.empty() ? a.ks : !rc.eval.ks.empty() ? rc.eval.ks : std::vector<std::size_t>{20};
  if (a.negatives) protocol.negatives = *a.negatives;
  if (a.seed) protocol.seed = *a.seed;
  protocol.validate();

  std::optional<sasrec::SasrecModel<float>> sas;
  std::optional<baselines::PointwiseModel<float>> pw;
  std::optional<baselines::PopularityIndex> pop;
  eval::Scorer scorer;
  if (a.model == "random") {
    scorer = baselines::random_scorer(protocol.seed);
  } else if (a.model == "top-popular") {
    pop.emplace(baselines::PopularityIndex::fit(ds, split));
    scorer = baselines::popularity_scorer(*pop);
  } else if (a.model == sasrec::kSasrecKind) {
    sas.emplace(sasrec::SasrecModel<float>::from_checkpoint(require_checkpoint(a)));
    if (sas->feature_dim() != ds.vehicle_feature_dim()) {
      throw ArgumentError("eval: checkpoint expects " + std::to_string(sas->feature_dim()) +
                          " vehicle features, data has " + std::to_string(ds.vehicle_feature_dim()));
    }
    scorer = sasrec::sasrec_scorer(*sas, ds);
  } else if (a.model == baselines::kPointwiseKind) {
    pw.emplace(baselines::PointwiseModel<float>::from_checkpoint(require_checkpoint(a)));
    scorer = baselines::pointwise_scorer(*pw, ds);
  } else {
    throw ArgumentError("eval: model '" + a.model + "' does not apply to auction data");
  }
  const auto& heldout = a.split == "validation" ? split.validation : split.test;
  err << "eval: " << heldout.size() << " held-out purchases, pool " << protocol.pool_size() << '\n';
  eval::EvalReport report{a.model, protocol, eval::evaluate(scorer, ds, heldout, protocol),
                          eval::fingerprint_json(eval::DatasetFingerprint::of(ds))};
  out << report.to_json().dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- recommend

struct RecommendArgs {
  fs::path checkpoint;
  fs::path data;
  data::DealerId dealer = 0;
  std::size_t k = 10;
};

/// Top-K over every vehicle the dealer has not interacted with, scored from
/// the dealer's full history.
inline int cmd_recommend(const RecommendArgs& a, std::ostream& out) {
  const auto ds = load_auction_dir(a.data);
  const auto model = sasrec::SasrecModel<float>::from_checkpoint(nn::load_checkpoint(a.checkpoint));
  if (model.feature_dim() != ds.vehicle_feature_dim()) {
    throw ArgumentError("recommend: checkpoint feature width does not match the data");
  }
  if (!ds.dealer_index(a.dealer)) throw ArgumentError("recommend: unknown dealer_id " + std::to_string(a.dealer));
  if (a.k == 0) throw ArgumentError("recommend: K must be >= 1");
  const auto history = data::full_history(ds, a.dealer, model.config().bids_in_input);
  std::unordered_set<data::VehicleId> touched;
  for (const auto& i : data::full_history(ds, a.dealer, true)) touched.insert(i.vehicle);
  std::vector<data::VehicleId> candidates;
  for (const auto& v : ds.vehicles())
    if (!touched.contains(v.id)) candidates.push_back(v.id);
  const auto seq = sasrec::make_sequence<float>(ds, history, model.config().max_seq_len);
  const auto recs = sasrec::recommend(model, seq, candidates, sasrec::candidate_features<float>(ds, candidates), a.k);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : recs) list.push_back({{"vehicle_id", r.vehicle}, {"score", r.score}});
  out << nlohmann::ordered_json{{"dealer_id", a.dealer}, {"k", a.k}, {"recommendations", list}}.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

inline int cmd_gradcheck(const verify::GradCheckOptions& opts, std::ostream& out, std::ostream& err) {
  const auto checks = verify::run_gradcheck_suite(opts);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    err << (c.passed ? "PASS " : "FAIL ") << c.name << " max_rel_error " << c.max_rel_error << '\n';
    list.push_back(c.to_json());
  }
  const bool ok = verify::all_passed(checks);
  out << nlohmann::ordered_json{{"tolerance", opts.tolerance}, {"epsilon", opts.epsilon}, {"passed", ok},
                                {"checks", list}}
             .dump(2)
      << '\n';
  return ok ? kOk : kVerificationFailure;
}

// ---------------------------------------------------------------- entry

/// Maps library exceptions onto the documented exit codes.
inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const IngestionError& e) {
    err << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::invalid_argument& e) {  // ArgumentError, ConfigError, DimensionError
    err << "error: " << e.what() << '\n';
    return kArgumentFailure;
  } catch (const ProtocolError& e) {
    err << "error: " << e.what() << '\n';
    return kArgumentFailure;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed checkpoint or config: " << e.what() << '\n';
    return kArgumentFailure;
  }
}

/// Parses argv and runs one subcommand. stdout gets JSON only.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Auction and next-best-offer recommenders", "arec"};
  app.require_subcommand(1);
  app.fallthrough();  // --config may follow the subcommand
  std::optional<fs::path> config;
  app.add_option("--config", config, "JSON run config; flags override it");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--kind", gen.kind, "auctions or contracts")->check(CLI::IsMember({"auctions", "contracts"}));
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--dealers", gen.dealers, "Number of dealers");
  g->add_option("--vehicles", gen.vehicles, "Number of vehicles");
  g->add_option("--records", gen.records, "Number of contracts");
  g->add_flag("--deterministic", gen.deterministic, "Contracts follow planted rules exactly");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint");
  t->add_option("--model", train.model, "sasrec-auc, pointwise or nbo")->required();
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--seed", train.seed, "Training seed");
  t->add_option("--epochs", train.epochs, "Maximum epochs");
  t->add_option("--lambda", train.lambda, "Bid loss weight (sasrec-auc)");
  t->add_flag("--no-bid-input", train.no_bid_input, "Drop bids from input sequences (sasrec-auc)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or baseline; prints a JSON report");
  e->add_option("--model", ev.model, "sasrec-auc, pointwise, nbo, random, top-popular, repeat-top-pop or knn")
      ->required()
      ->check(CLI::IsMember({"sasrec-auc", "pointwise", "nbo", "random", "top-popular", "repeat-top-pop", "knn"}));
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint for trained models");
  e->add_option("--k", ev.ks, "Cut-off K (repeatable)");
  e->add_option("--negatives", ev.negatives, "Sampled negatives per positive");
  e->add_option("--seed", ev.seed, "Sampling seed");
  e->add_option("--neighbours", ev.neighbours, "k for the knn baseline");
  e->add_option("--split", ev.split, "test or validation");

  RecommendArgs rec;
  auto* r = app.add_subcommand("recommend", "Top-K vehicles for a dealer");
  r->add_option("--checkpoint", rec.checkpoint, "sasrec-auc checkpoint")->required();
  r->add_option("--data", rec.data, "Dataset directory")->required();
  r->add_option("--dealer", rec.dealer, "Dealer id")->required();
  r->add_option("--k", rec.k, "Number of vehicles");

  verify::GradCheckOptions gc;
  auto* v = app.add_subcommand("gradcheck", "Finite-difference check of every layer and model loss");
  v->add_option("--inject-fault", gc.inject_fault, "Corrupt one check's gradient (harness self-test)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kArgumentFailure;
  }

  return run_guarded(
      [&] {
        const RunConfig rc = config ? RunConfig::load(*config) : RunConfig{};
        if (g->parsed()) return cmd_gen(gen, rc, out, err);
        if (t->parsed()) return cmd_train(train, rc, out, err);
        if (e->parsed()) return cmd_eval(ev, rc, out, err);
        if (r->parsed()) return cmd_recommend(rec, out);
        return cmd_gradcheck(gc, out, err);
      },
      err);
}

}  // namespace arec::cli
