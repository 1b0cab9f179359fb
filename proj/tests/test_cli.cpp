#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "arec/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace arec;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
  json j() const { return json::parse(out); }
};

Run run_arec(std::vector<std::string> args) {
  args.insert(args.begin(), "arec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("arec_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Small auction dataset shared by the tests that only read it.
const fs::path& auction_dir() {
  static const fs::path dir = [] {
    auto d = scratch("auctions") / "data";
    auto r = run_arec({"gen", "--out", d.string(), "--dealers", "40", "--vehicles", "800", "--seed", "3"});
    if (r.code != 0) throw std::runtime_error(r.err);
    return d;
  }();
  return dir;
}

const fs::path& sasrec_checkpoint() {
  static const fs::path ckpt = [] {
    auto out = scratch("sasrec_model");
    auto r = run_arec({"train", "--model", "sasrec-auc", "--data", auction_dir().string(), "--out", out.string(),
                  "--epochs", "2"});
    if (r.code != 0) throw std::runtime_error(r.err);
    return out / cli::kCheckpointFile;
  }();
  return ckpt;
}

}  // namespace

// ---------- gen ----------

TEST(CliGen, StatsUseTableFieldNamesAndOnePurchasePerVehicle) {
  auto d = scratch("gen_stats");
  auto r = run_arec({"gen", "--out", d.string(), "--dealers", "30", "--vehicles", "500"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.j();
  EXPECT_EQ(j["Items"], 500);
  EXPECT_EQ(j["Purchases"], j["Items"]);
  for (const char* key : {"Users", "Biddings", "Purchases Density (%)", "Biddings Density (%)", "User Features",
                          "Item Features", "Unique Items (%)"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(json::parse(slurp(d / cli::kStatsFile)), j);
  EXPECT_TRUE(fs::exists(d / "interactions.csv") && fs::exists(d / "dealers.csv") && fs::exists(d / "vehicles.csv"));
}

TEST(CliGen, SameSeedWritesIdenticalFiles) {
  auto a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(run_arec({"gen", "--out", a.string(), "--dealers", "20", "--vehicles", "300", "--seed", "7"}).code, 0);
  ASSERT_EQ(run_arec({"gen", "--out", b.string(), "--dealers", "20", "--vehicles", "300", "--seed", "7"}).code, 0);
  for (const char* f : {"dealers.csv", "vehicles.csv", "interactions.csv", "stats.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(CliGen, LargeScaleCountsRoundToThreeDecimals) {
  auto d = scratch("gen_scale");
  std::ofstream(d / "config.json") << R"({"synthetic": {"n_dealers": 3220, "n_vehicles": 269104,
      "bids_per_purchase_mean": 1.3948, "dealer_feature_dim": 1, "vehicle_feature_dim": 1}})";
  auto r = run_arec({"gen", "--config", (d / "config.json").string(), "--out", (d / "data").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.j()["Purchases Density (%)"], 0.031);
  EXPECT_EQ(r.j()["Biddings Density (%)"], 0.043);
}

TEST(CliGen, ContractsKindWritesSchemaAndCsv) {
  auto d = scratch("gen_contracts");
  auto r = run_arec({"gen", "--kind", "contracts", "--out", d.string(), "--records", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.j()["Records"], 200);
  EXPECT_EQ(r.j()["Classes"], 70);
  EXPECT_TRUE(fs::exists(d / "contracts.csv") && fs::exists(d / "contracts.schema.json"));
}

// ---------- config ----------

TEST(CliConfig, UnknownKeyIsRejected) {
  auto d = scratch("cfg_unknown");
  std::ofstream(d / "c.json") << R"({"sasrec": {"embed_dim": 16, "embedding_size": 3}})";
  auto r = run_arec({"gen", "--config", (d / "c.json").string(), "--out", (d / "x").string()});
  EXPECT_EQ(r.code, cli::kArgumentFailure);
  EXPECT_NE(r.err.find("embedding_size"), std::string::npos) << r.err;
  std::ofstream(d / "top.json") << R"({"sasrecc": {}})";
  EXPECT_EQ(run_arec({"gen", "--config", (d / "top.json").string(), "--out", (d / "x").string()}).code,
            cli::kArgumentFailure);
}

TEST(CliConfig, FlagsOverrideConfig) {
  auto d = scratch("cfg_override");
  std::ofstream(d / "c.json") << R"({"synthetic": {"n_dealers": 20, "n_vehicles": 300, "seed": 1}})";
  ASSERT_EQ(run_arec({"gen", "--config", (d / "c.json").string(), "--seed", "7", "--out", (d / "a").string()}).code, 0);
  ASSERT_EQ(run_arec({"gen", "--dealers", "20", "--vehicles", "300", "--seed", "7", "--out", (d / "b").string()}).code, 0);
  EXPECT_EQ(slurp(d / "a" / "interactions.csv"), slurp(d / "b" / "interactions.csv"));
}

TEST(CliConfig, MissingConfigFileIsAnIoError) {
  auto r = run_arec({"gen", "--config", "/nonexistent/c.json", "--out", scratch("cfg_missing").string()});
  EXPECT_EQ(r.code, cli::kIoFailure);
}

// ---------- train ----------

TEST(CliTrain, SasrecCheckpointReloads) {
  const auto ckpt = nn::load_checkpoint(sasrec_checkpoint());
  EXPECT_EQ(ckpt.kind, sasrec::kSasrecKind);
  EXPECT_NO_THROW(sasrec::SasrecModel<float>::from_checkpoint(ckpt));
  EXPECT_TRUE(fs::exists(sasrec_checkpoint().parent_path() / cli::kTrainLogFile));
}

TEST(CliTrain, SameFlagsWriteIdenticalArtifacts) {
  auto a = scratch("train_a"), b = scratch("train_b");
  for (const auto& out : {a, b}) {
    ASSERT_EQ(run_arec({"train", "--model", "sasrec-auc", "--data", auction_dir().string(), "--out", out.string(),
                   "--epochs", "1", "--seed", "4"})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(a / cli::kCheckpointFile), slurp(b / cli::kCheckpointFile));
  EXPECT_EQ(slurp(a / cli::kTrainLogFile), slurp(b / cli::kTrainLogFile));
}

TEST(CliTrain, NboOnToyContracts) {
  auto d = scratch("train_nbo");
  ASSERT_EQ(run_arec({"gen", "--kind", "contracts", "--out", (d / "data").string(), "--records", "120"}).code, 0);
  auto r = run_arec({"train", "--model", "nbo", "--data", (d / "data").string(), "--out", (d / "m").string(),
                "--epochs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nn::load_checkpoint(d / "m" / cli::kCheckpointFile).kind, nbo::kNboKind);
}

TEST(CliTrain, PointwiseWritesCheckpoint) {
  auto d = scratch("train_pw");
  auto r = run_arec({"train", "--model", "pointwise", "--data", auction_dir().string(), "--out", d.string(), "--epochs",
                "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nn::load_checkpoint(d / cli::kCheckpointFile).kind, baselines::kPointwiseKind);
}

TEST(CliTrain, MissingDataDirExitsTwoAndNamesPath) {
  auto r = run_arec({"train", "--model", "sasrec-auc", "--data", "/no/such/dir", "--out", scratch("train_missing").string()});
  EXPECT_EQ(r.code, cli::kIoFailure);
  EXPECT_NE(r.err.find("/no/such/dir"), std::string::npos) << r.err;
}

TEST(CliTrain, DivergenceExitsThree) {
  auto d = scratch("train_nan");
  std::ofstream(d / "c.json") << R"({"sasrec": {"lr": 1e30}})";
  auto r = run_arec({"train", "--config", (d / "c.json").string(), "--model", "sasrec-auc", "--data",
                auction_dir().string(), "--out", (d / "m").string(), "--epochs", "2"});
  EXPECT_EQ(r.code, cli::kNumericFailure) << r.err;
}

TEST(CliTrain, UnknownModelIsAnArgumentError) {
  auto r = run_arec({"train", "--model", "catboost", "--data", auction_dir().string(), "--out",
                scratch("train_unknown").string()});
  EXPECT_EQ(r.code, cli::kArgumentFailure);
}

// ---------- eval ----------

TEST(CliEval, RandomBaselineNearKOverPool) {
  auto r = run_arec({"eval", "--model", "random", "--data", auction_dir().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.j();
  EXPECT_EQ(j["protocol"]["negatives"], 103);
  const double cases = 40;  // at most one test purchase per dealer
  const double p = 20.0 / 104.0;
  EXPECT_NEAR(j["metrics"]["hr@20"].get<double>(), p, 4 * std::sqrt(p * (1 - p) / cases) + 0.05);
  EXPECT_TRUE(j.contains("dataset") && j["dataset"].contains("users"));
}

TEST(CliEval, TopPopularAtLeastRandom) {
  auto rnd = run_arec({"eval", "--model", "random", "--data", auction_dir().string()});
  auto pop = run_arec({"eval", "--model", "top-popular", "--data", auction_dir().string()});
  ASSERT_EQ(pop.code, 0) << pop.err;
  EXPECT_GE(pop.j()["metrics"]["hr@20"].get<double>(), rnd.j()["metrics"]["hr@20"].get<double>());
}

TEST(CliEval, ProtocolFlagsAreEchoed) {
  auto r = run_arec({"eval", "--model", "top-popular", "--data", auction_dir().string(), "--k", "5", "--k", "20",
                "--negatives", "50", "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.j();
  EXPECT_EQ(j["protocol"]["k"], json::parse("[5, 20]"));
  EXPECT_EQ(j["protocol"]["negatives"], 50);
  EXPECT_EQ(j["protocol"]["seed"], 9);
  EXPECT_TRUE(j["metrics"].contains("hr@5") && j["metrics"].contains("ndcg@20"));
}

TEST(CliEval, SasrecReportIsDeterministic) {
  auto args = std::vector<std::string>{"eval", "--model", "sasrec-auc", "--data", auction_dir().string(),
                                       "--checkpoint", sasrec_checkpoint().string()};
  auto a = run_arec(args), b = run_arec(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST(CliEval, CheckpointKindMismatchExitsFour) {
  auto r = run_arec({"eval", "--model", "pointwise", "--data", auction_dir().string(), "--checkpoint",
                sasrec_checkpoint().string()});
  EXPECT_EQ(r.code, cli::kArgumentFailure);
  EXPECT_EQ(run_arec({"eval", "--model", "sasrec-auc", "--data", auction_dir().string()}).code, cli::kArgumentFailure);
}

TEST(CliEval, KBeyondPoolIsRejected) {
  auto r = run_arec({"eval", "--model", "random", "--data", auction_dir().string(), "--k", "60", "--negatives", "50"});
  EXPECT_EQ(r.code, cli::kArgumentFailure);
}

TEST(CliEval, ContractModels) {
  auto d = scratch("eval_contracts");
  ASSERT_EQ(run_arec({"gen", "--kind", "contracts", "--out", (d / "data").string(), "--records", "600"}).code, 0);
  ASSERT_EQ(run_arec({"train", "--model", "nbo", "--data", (d / "data").string(), "--out", (d / "m").string(),
                 "--epochs", "2"})
                .code,
            0);
  for (const char* m : {"nbo", "random", "repeat-top-pop", "knn"}) {
    auto r = run_arec({"eval", "--model", m, "--data", (d / "data").string(), "--checkpoint",
                  (d / "m" / cli::kCheckpointFile).string()});
    ASSERT_EQ(r.code, 0) << m << ": " << r.err;
    EXPECT_EQ(r.j()["protocol"]["k"], json::parse("[5]")) << m;
    EXPECT_EQ(r.j()["protocol"]["negatives"], 69) << m;
  }
  EXPECT_EQ(run_arec({"eval", "--model", "top-popular", "--data", (d / "data").string()}).code, cli::kArgumentFailure);
  EXPECT_EQ(run_arec({"eval", "--model", "knn", "--data", (d / "data").string(), "--neighbours", "100000"}).code,
            cli::kArgumentFailure);
}

// ---------- recommend ----------

TEST(CliRecommend, SingleRecommendationAmongUntouchedVehicles) {
  auto r = run_arec({"recommend", "--checkpoint", sasrec_checkpoint().string(), "--data", auction_dir().string(),
                "--dealer", "3", "--k", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(r.j()["recommendations"].size(), 1u);

  auto many = run_arec({"recommend", "--checkpoint", sasrec_checkpoint().string(), "--data", auction_dir().string(),
                   "--dealer", "3", "--k", "25"});
  const auto ds = data::load_interactions(auction_dir());
  std::set<data::VehicleId> touched;
  for (const auto& i : data::full_history(ds, 3)) touched.insert(i.vehicle);
  double prev = INFINITY;
  for (const auto& rec : many.j()["recommendations"]) {
    const auto v = rec["vehicle_id"].get<data::VehicleId>();
    EXPECT_TRUE(ds.vehicle_index(v).has_value());
    EXPECT_FALSE(touched.contains(v));
    EXPECT_LE(rec["score"].get<double>(), prev);
    prev = rec["score"].get<double>();
  }
  EXPECT_EQ(many.j()["recommendations"][0], r.j()["recommendations"][0]);
}

TEST(CliRecommend, UnknownDealerExitsFour) {
  auto r = run_arec({"recommend", "--checkpoint", sasrec_checkpoint().string(), "--data", auction_dir().string(),
                "--dealer", "99999"});
  EXPECT_EQ(r.code, cli::kArgumentFailure);
  EXPECT_NE(r.err.find("99999"), std::string::npos);
}

// ---------- gradcheck ----------

TEST(CliGradcheck, AllLayersPassAndAreListed) {
  auto r = run_arec({"gradcheck"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = r.j();
  EXPECT_TRUE(j["passed"].get<bool>());
  std::vector<std::string> names;
  for (const auto& c : j["checks"]) names.push_back(c["layer"]);
  EXPECT_EQ(names, verify::gradcheck_layer_names());
  for (const auto& n : names) EXPECT_NE(r.err.find("PASS " + n), std::string::npos) << n;
}

TEST(CliGradcheck, InjectedFaultExitsFive) {
  auto r = run_arec({"gradcheck", "--inject-fault", "sasrec_auc_loss"});
  EXPECT_EQ(r.code, cli::kVerificationFailure);
  EXPECT_NE(r.err.find("FAIL sasrec_auc_loss"), std::string::npos);
  EXPECT_FALSE(r.j()["passed"].get<bool>());
}

TEST(CliParse, MissingSubcommandOrRequiredFlag) {
  EXPECT_EQ(run_arec({}).code, cli::kArgumentFailure);
  EXPECT_EQ(run_arec({"eval", "--data", "x"}).code, cli::kArgumentFailure);
  EXPECT_EQ(run_arec({"eval", "--model", "catboost", "--data", "x"}).code, cli::kArgumentFailure);
}
