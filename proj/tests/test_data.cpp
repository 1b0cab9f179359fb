#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "arec/data/csv.hpp"
#include "arec/data/dataset.hpp"
#include "arec/data/split.hpp"
#include "arec/data/synthetic.hpp"

using namespace arec;
using namespace arec::data;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("arec_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  void write(const std::string& name, const std::string& body) const {
    std::ofstream(path_ / name) << body;
  }

 private:
  fs::path path_;
};

void write_entities(const TempDir& dir) {
  dir.write("dealers.csv", "dealer_id,f0\n1,0.5\n2,-1\n");
  dir.write("vehicles.csv", "vehicle_id,f0,f1\n10,1,2\n11,3,4\n12,5,6\n");
}

Dataset toy(std::vector<Interaction> rows, std::size_t dealers = 3, std::size_t vehicles = 20) {
  std::vector<DealerRecord> d;
  for (std::size_t i = 0; i < dealers; ++i) d.push_back({static_cast<DealerId>(i), {0.f}});
  std::vector<VehicleRecord> v;
  for (std::size_t i = 0; i < vehicles; ++i) v.push_back({static_cast<VehicleId>(i), {0.f}});
  return Dataset(std::move(d), std::move(v), std::move(rows));
}

}  // namespace

TEST(LoadInteractions, HeaderOnlyFileGivesEmptyDataset) {
  TempDir dir;
  write_entities(dir);
  dir.write("interactions.csv", "dealer_id,vehicle_id,timestamp,relation\n");
  auto ds = load_interactions(dir.path());
  EXPECT_EQ(ds.interactions().size(), 0u);
  EXPECT_EQ(ds.dealers().size(), 2u);
  EXPECT_EQ(ds.vehicle_feature_dim(), 2u);
}

TEST(LoadInteractions, ThreeRowFileMatchesHandCount) {
  TempDir dir;
  write_entities(dir);
  dir.write("interactions.csv",
            "dealer_id,vehicle_id,timestamp,relation\n1,10,100,bid\n2,10,150,purchase\n1,11,90,purchase\n");
  auto ds = load_interactions(dir.path());
  auto s = stats(ds);
  EXPECT_EQ(s.users, 2u);
  EXPECT_EQ(s.items, 3u);
  EXPECT_EQ(s.purchases, 2u);
  EXPECT_EQ(s.biddings, 1u);
  EXPECT_DOUBLE_EQ(s.purchase_density_pct, 100.0 * 2 / 6);
  EXPECT_DOUBLE_EQ(s.unique_item_pct, 100.0);
  // Dealer 1's timeline is chronological: the purchase at t=90 precedes the bid at t=100.
  auto tl = ds.timeline(1);
  ASSERT_EQ(tl.size(), 2u);
  EXPECT_EQ(ds.interactions()[tl[0]].timestamp, 90);
}

TEST(LoadInteractions, MissingVehicleNamesTheRow) {
  TempDir dir;
  write_entities(dir);
  dir.write("interactions.csv", "dealer_id,vehicle_id,timestamp,relation\n1,10,5,bid\n1,99,6,purchase\n");
  try {
    load_interactions(dir.path());
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
  }
}

TEST(LoadInteractions, MalformedRowReportsLineNumber) {
  TempDir dir;
  write_entities(dir);
  dir.write("interactions.csv", "dealer_id,vehicle_id,timestamp,relation\n1,10,5,bid\n1,11,abc,bid\n");
  try {
    load_interactions(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  dir.write("interactions.csv", "dealer_id,vehicle_id,timestamp,relation\n1,10,5,sold\n");
  EXPECT_THROW(load_interactions(dir.path()), ParseError);
  dir.write("interactions.csv", "dealer,vehicle_id,timestamp,relation\n");
  EXPECT_THROW(load_interactions(dir.path()), ParseError);
}

TEST(LoadInteractions, DoublePurchaseIsRejected) {
  TempDir dir;
  write_entities(dir);
  dir.write("interactions.csv", "dealer_id,vehicle_id,timestamp,relation\n1,10,5,purchase\n2,10,6,purchase\n");
  EXPECT_THROW(load_interactions(dir.path()), IngestionError);
}

TEST(LoadInteractions, WrittenDatasetReloadsIdentically) {
  TempDir dir;
  SyntheticConfig cfg;
  cfg.n_dealers = 12;
  cfg.n_vehicles = 60;
  cfg.dealer_feature_dim = 3;
  cfg.vehicle_feature_dim = 4;
  auto gen = generate_synthetic(cfg);
  write_dataset(dir.path(), gen.dataset);
  auto back = load_interactions(dir.path());
  EXPECT_EQ(back.interactions(), gen.dataset.interactions());
  ASSERT_EQ(back.vehicles().size(), gen.dataset.vehicles().size());
  for (std::size_t i = 0; i < back.vehicles().size(); ++i)
    EXPECT_EQ(back.vehicles()[i].features, gen.dataset.vehicles()[i].features);
}

TEST(Stats, LargeScaleDensitiesRoundToThreeDecimals) {
  auto s = stats_from_counts(3220, 269104, 269104, 375349, 269104);
  EXPECT_DOUBLE_EQ(round_to(s.purchase_density_pct, 3), 0.031);
  EXPECT_DOUBLE_EQ(round_to(s.bidding_density_pct, 3), 0.043);
  // One purchase per item means purchase density is exactly 1/users.
  EXPECT_NEAR(s.purchase_density_pct, 100.0 / 3220, 1e-15);
}

TEST(Stats, SingleCellIsFullyDense) {
  auto s = stats_from_counts(1, 1, 1, 0, 1);
  EXPECT_DOUBLE_EQ(s.purchase_density_pct, 100.0);
}

TEST(Stats, ZeroUsersOrItemsIsUndefined) {
  EXPECT_THROW(stats_from_counts(0, 5, 0, 0, 0), ProtocolError);
  EXPECT_THROW(stats_from_counts(5, 0, 0, 0, 0), ProtocolError);
}

TEST(Split, ThreePurchasesSplitChronologically) {
  auto ds = toy({{0, 3, 3, Relation::purchase}, {0, 1, 1, Relation::purchase}, {0, 2, 2, Relation::purchase},
                 {0, 9, 2, Relation::bid}});
  auto s = leave_one_out_split(ds);
  ASSERT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.train[0].timestamp, 1);
  ASSERT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.validation[0].timestamp, 2);
  ASSERT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.test[0].timestamp, 3);
  EXPECT_EQ(s.bids.size(), 1u);
}

TEST(Split, TwoPurchaseDealerStaysInTrain) {
  auto ds = toy({{1, 4, 10, Relation::purchase}, {1, 5, 20, Relation::purchase}});
  auto s = leave_one_out_split(ds);
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_TRUE(s.validation.empty());
  EXPECT_TRUE(s.test.empty());
  EXPECT_FALSE(s.holdout_of(1).has_value());
}

TEST(Split, TestCountMatchesDealersWithThreePurchases) {
  SyntheticConfig cfg;
  cfg.n_dealers = 100;
  cfg.n_vehicles = 260;
  cfg.candidates_per_auction = 10;
  auto gen = generate_synthetic(cfg);
  std::map<DealerId, int> purchases;
  for (const auto& i : gen.dataset.interactions())
    if (i.relation == Relation::purchase) ++purchases[i.dealer];
  const auto eligible = std::count_if(purchases.begin(), purchases.end(), [](auto& kv) { return kv.second >= 3; });
  auto s = leave_one_out_split(gen.dataset);
  EXPECT_EQ(static_cast<long>(s.test.size()), eligible);
  EXPECT_GT(eligible, 0);
  EXPECT_LT(eligible, 100);
}

TEST(Split, IsAPartitionWithoutLeakage) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SyntheticConfig cfg;
    cfg.n_dealers = 40;
    cfg.n_vehicles = 400;
    cfg.seed = seed;
    auto gen = generate_synthetic(cfg);
    const auto& ds = gen.dataset;
    auto s = leave_one_out_split(ds);
    std::multiset<VehicleId> all, parts;
    for (const auto& i : ds.interactions())
      if (i.relation == Relation::purchase) all.insert(i.vehicle);
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& i : *part) parts.insert(i.vehicle);
    EXPECT_EQ(all, parts);  // purchase vehicles are unique, so equal multisets mean disjoint cover

    for (const auto& t : s.test) {
      auto h = history_before(ds, t.dealer, t.timestamp);
      for (const auto& i : h) ASSERT_LT(i.timestamp, t.timestamp);
      auto train_seq = training_sequence(ds, s, t.dealer);
      for (const auto& i : train_seq) ASSERT_LT(i.timestamp, *s.holdout_of(t.dealer));
    }
  }
}

TEST(Synthetic, OnePurchasePerVehicle) {
  SyntheticConfig cfg;
  cfg.n_dealers = 5;
  cfg.n_vehicles = 10;
  auto gen = generate_synthetic(cfg);
  EXPECT_EQ(gen.dataset.count(Relation::purchase), 10u);
}

TEST(Synthetic, SameSeedSameDataset) {
  SyntheticConfig cfg;
  cfg.n_dealers = 30;
  cfg.n_vehicles = 300;
  auto a = generate_synthetic(cfg);
  auto b = generate_synthetic(cfg);
  EXPECT_EQ(a.dataset.interactions(), b.dataset.interactions());
  EXPECT_EQ(a.dealer_latents, b.dealer_latents);
  cfg.seed = 2;
  auto c = generate_synthetic(cfg);
  EXPECT_NE(a.dataset.interactions(), c.dataset.interactions());
}

TEST(Synthetic, StatsFollowDensityFormulaExactly) {
  SyntheticConfig cfg;
  cfg.n_dealers = 50;
  cfg.n_vehicles = 700;
  auto gen = generate_synthetic(cfg);
  auto s = stats(gen.dataset);
  EXPECT_EQ(s.purchases, cfg.n_vehicles);
  EXPECT_EQ(s.purchase_density_pct, 100.0 * 700.0 / (50.0 * 700.0));
  EXPECT_EQ(s.bidding_density_pct, 100.0 * static_cast<double>(s.biddings) / (50.0 * 700.0));
  EXPECT_EQ(s.unique_item_pct, 100.0);
}

TEST(Synthetic, BidsPrecedeTheSale) {
  SyntheticConfig cfg;
  cfg.n_dealers = 20;
  cfg.n_vehicles = 200;
  auto gen = generate_synthetic(cfg);
  std::map<VehicleId, Timestamp> sale;
  for (const auto& i : gen.dataset.interactions())
    if (i.relation == Relation::purchase) sale[i.vehicle] = i.timestamp;
  for (const auto& i : gen.dataset.interactions()) {
    if (i.relation != Relation::bid) continue;
    EXPECT_LT(i.timestamp, sale.at(i.vehicle));
    EXPECT_GE(i.timestamp, sale.at(i.vehicle) - cfg.bid_window_seconds);
  }
}

TEST(Synthetic, WinnerFrequenciesMatchSoftmaxOracle) {
  // Noiseless, one latent dimension: affinities of 6 dealers for vehicle 0.
  SyntheticConfig cfg;
  cfg.n_dealers = 6;
  cfg.n_vehicles = 1;
  cfg.latent_dim = 1;
  cfg.noise_scale = 0.0;
  cfg.seed = 3;
  auto gen = generate_synthetic(cfg);
  std::vector<double> logits(6);
  for (std::size_t d = 0; d < 6; ++d) logits[d] = gen.affinity(static_cast<DealerId>(d), 0);

  double z = 0;
  for (double l : logits) z += std::exp(l);
  const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());

  const int draws = 10000;
  std::vector<int> wins(6, 0);
  nn::Rng rng(123);
  for (int i = 0; i < draws; ++i) ++wins[sample_softmax(logits, rng)];
  for (std::size_t d = 0; d < 6; ++d) {
    const double p = std::exp(logits[d]) / z;
    const double sigma = std::sqrt(p * (1 - p) / draws);
    EXPECT_NEAR(wins[d] / static_cast<double>(draws), p, 3 * sigma + 1e-12) << "dealer " << d;
  }
  EXPECT_EQ(static_cast<std::size_t>(std::max_element(wins.begin(), wins.end()) - wins.begin()), best);
}

TEST(Synthetic, FullScaleDensities) {
  SyntheticConfig cfg;
  cfg.n_dealers = 3220;
  cfg.n_vehicles = 269104;
  cfg.dealer_feature_dim = 2;
  cfg.vehicle_feature_dim = 2;
  cfg.bids_per_purchase_mean = 375349.0 / 269104.0;
  cfg.bid_growth = 0.0;
  auto gen = generate_synthetic(cfg);
  auto s = stats(gen.dataset);
  EXPECT_EQ(s.purchases, 269104u);
  EXPECT_DOUBLE_EQ(round_to(s.purchase_density_pct, 3), 0.031);
  EXPECT_DOUBLE_EQ(round_to(s.bidding_density_pct, 3), 0.043);
}

TEST(Synthetic, RejectsInvalidConfig) {
  SyntheticConfig cfg;
  cfg.noise_scale = -1;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = {};
  cfg.n_vehicles = 0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}
