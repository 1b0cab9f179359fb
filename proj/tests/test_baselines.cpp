#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ranges>
#include <set>
#include <sstream>

#include "arec/baselines/pointwise.hpp"
#include "arec/baselines/popularity.hpp"
#include "arec/baselines/random.hpp"
#include "arec/data/split.hpp"
#include "arec/data/synthetic.hpp"
#include "arec/eval/metrics.hpp"
#include "arec/nn/grad_check.hpp"

using namespace arec;
using namespace arec::baselines;
using data::Interaction;
using data::Relation;

namespace {

data::SyntheticData world(std::uint64_t seed, std::size_t dealers = 80, std::size_t vehicles = 4000) {
  data::SyntheticConfig cfg;
  cfg.n_dealers = dealers;
  cfg.n_vehicles = vehicles;
  cfg.seed = seed;
  cfg.dealer_feature_dim = 6;
  cfg.vehicle_feature_dim = 8;
  return data::generate_synthetic(cfg);
}

}  // namespace

TEST(RandomRanker, SingleCandidate) {
  std::vector<data::VehicleId> c{42};
  EXPECT_EQ(random_ranker(c, 3), c);
}

TEST(RandomRanker, SameSeedSamePermutation) {
  std::vector<data::VehicleId> c(30);
  std::iota(c.begin(), c.end(), 100);
  auto a = random_ranker(c, 8), b = random_ranker(c, 8), other = random_ranker(c, 9);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, other);
  std::sort(a.begin(), a.end());
  EXPECT_EQ(a, c);
}

TEST(RandomRanker, HitRateWithinThreeSigmaOfKOverC) {
  std::vector<data::VehicleId> c(104);
  std::iota(c.begin(), c.end(), 0);
  const int trials = 10000;
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    auto r = random_ranker(c, static_cast<std::uint64_t>(t));
    const auto positive = static_cast<data::VehicleId>(t % 104);
    if (std::find(r.begin(), r.begin() + 20, positive) != r.begin() + 20) ++hits;
  }
  const double p = 20.0 / 104.0;
  EXPECT_NEAR(hits / static_cast<double>(trials), p, 3 * std::sqrt(p * (1 - p) / trials));
}

TEST(Popularity, AllZeroCountsGiveAscendingIds) {
  PopularityIndex idx;
  std::vector<data::VehicleId> c{9, 2, 5};
  EXPECT_EQ(popularity_ranker(idx, c), (std::vector<data::VehicleId>{2, 5, 9}));
}

TEST(Popularity, OrdersByCount) {
  // a=1 with 3 rows, b=2 with 1, c=3 with 2.
  std::vector<Interaction> rows{{0, 1, 0, Relation::bid},      {1, 1, 0, Relation::bid}, {2, 1, 0, Relation::purchase},
                                {0, 2, 0, Relation::bid},      {0, 3, 0, Relation::bid}, {1, 3, 0, Relation::bid}};
  PopularityIndex idx(rows);
  std::vector<data::VehicleId> c{2, 3, 1};
  EXPECT_EQ(popularity_ranker(idx, c), (std::vector<data::VehicleId>{1, 3, 2}));
}

TEST(Popularity, ReadsTrainRowsOnly) {
  auto w = world(2);
  auto split = data::leave_one_out_split(w.dataset);
  std::set<data::VehicleId> heldout;
  for (const auto* part : {&split.validation, &split.test})
    for (const auto& i : *part) heldout.insert(i.vehicle);

  // Instrumented loader: records every row the index consumes.
  std::vector<Interaction> seen;
  const auto rows = data::train_rows(w.dataset, split);
  auto logged = rows | std::views::transform([&](const Interaction& r) -> Interaction {
                  seen.push_back(r);
                  return r;
                });
  PopularityIndex instrumented(logged);
  EXPECT_EQ(instrumented, PopularityIndex::fit(w.dataset, split));
  EXPECT_EQ(seen.size(), w.dataset.interactions().size() - split.validation.size() - split.test.size());
  for (const auto& r : seen) {
    EXPECT_FALSE(r.relation == Relation::purchase && heldout.contains(r.vehicle)) << "held-out row consumed";
  }
}

TEST(Popularity, HeldOutRowsCannotChangeTheIndex) {
  auto w = world(5);
  auto split = data::leave_one_out_split(w.dataset);
  auto before = PopularityIndex::fit(w.dataset, split);
  // Move every held-out purchase to a fresh vehicle.
  std::set<std::pair<data::DealerId, data::Timestamp>> heldout;
  for (const auto* part : {&split.validation, &split.test})
    for (const auto& i : *part) heldout.insert({i.dealer, i.timestamp});
  auto vehicles = w.dataset.vehicles();
  auto rows = w.dataset.interactions();
  data::VehicleId next = 1'000'000;
  for (auto& r : rows) {
    if (r.relation == Relation::purchase && heldout.contains({r.dealer, r.timestamp})) {
      vehicles.push_back({next, vehicles.front().features});
      r.vehicle = next++;
    }
  }
  data::Dataset moved(w.dataset.dealers(), vehicles, rows);
  auto split2 = data::leave_one_out_split(moved);
  EXPECT_EQ(PopularityIndex::fit(moved, split2), before);
}

TEST(Popularity, BeatsRandomOnSyntheticData) {
  data::SyntheticConfig cfg;
  cfg.n_dealers = 200;
  cfg.n_vehicles = 8000;
  cfg.seed = 3;
  auto w = data::generate_synthetic(cfg);
  auto split = data::leave_one_out_split(w.dataset);
  eval::EvalProtocol p;
  auto cases = eval::build_cases(w.dataset, split.test, p);
  auto idx = PopularityIndex::fit(w.dataset, split);
  auto pop = eval::evaluate(popularity_scorer(idx), cases, p);
  auto rnd = eval::evaluate(random_scorer(3), cases, p);
  EXPECT_GT(pop.at_k[20].hr, rnd.at_k[20].hr);
}

TEST(Pointwise, ZeroInitScoresTieAndFallBackToIdOrder) {
  auto w = world(1, 10, 200);
  PointwiseModel<float> m(w.dataset.dealer_feature_dim(), w.dataset.vehicle_feature_dim());
  std::vector<data::VehicleId> c{17, 4, 150, 9};
  auto s = m.score(w.dataset, 0, c);
  for (double v : s) EXPECT_EQ(v, s[0]);
  auto order = eval::ranking_order<double>(s, c);
  EXPECT_EQ(c[order[0]], 4);
  EXPECT_EQ(c[order[3]], 150);
}

TEST(Pointwise, LossGradientMatchesFiniteDifferences) {
  auto w = world(2, 6, 40);
  PointwiseModel<double> m(w.dataset.dealer_feature_dim(), w.dataset.vehicle_feature_dim(), 7, 5);
  m.init_xavier(3);
  // Non-zero biases so every ReLU sees both signs away from the kink.
  nn::Rng rng(4);
  for (auto& p : m.params())
    for (auto& v : p->value.values()) v += rng.uniform(-0.1, 0.1);
  std::vector<Interaction> rows(w.dataset.interactions().begin(), w.dataset.interactions().begin() + 6);
  std::vector<double> labels{1, 0, 1, 1, 0, 0};
  auto loss_fn = [&](bool acc) {
    nn::Graph<double> g({true, 0});
    auto l = pointwise_loss<double>(g, m, w.dataset, rows, labels);
    if (acc) g.backward(l);
    return l.value()[0];
  };
  auto r = nn::grad_check<double>(loss_fn, m.params());
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_parameter << "[" << r.worst_index << "]";
}

TEST(Pointwise, CheckpointRoundTripKeepsScores) {
  auto w = world(3, 20, 500);
  auto split = data::leave_one_out_split(w.dataset);
  PointwiseConfig cfg;
  cfg.epochs = 1;
  auto m = train_pointwise(w.dataset, split, cfg);
  std::stringstream buf;
  nn::write_checkpoint(buf, m.to_checkpoint());
  auto back = PointwiseModel<float>::from_checkpoint(nn::read_checkpoint(buf));
  std::vector<data::VehicleId> c{1, 2, 3, 4, 5};
  EXPECT_EQ(m.score(w.dataset, 0, c), back.score(w.dataset, 0, c));
  auto ck = m.to_checkpoint();
  ck.kind = "sasrec-auc";
  EXPECT_THROW(PointwiseModel<float>::from_checkpoint(ck), ArgumentError);
}

TEST(Pointwise, BeatsRandomOnSyntheticData) {
  auto w = world(4, 100, 6000);
  auto split = data::leave_one_out_split(w.dataset);
  PointwiseConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  auto m = train_pointwise(w.dataset, split, cfg);
  eval::EvalProtocol p;
  auto cases = eval::build_cases(w.dataset, split.test, p);
  auto pw = eval::evaluate(pointwise_scorer(m, w.dataset), cases, p);
  auto rnd = eval::evaluate(random_scorer(4), cases, p);
  EXPECT_GT(pw.at_k[20].hr, rnd.at_k[20].hr);
}
