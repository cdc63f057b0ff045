#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "dfa/cascade.hpp"
#include "dfa/pseudolabel.hpp"
#include "dfa/report.hpp"

using namespace dfa;
using namespace dfa::cli;
namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path r = [] {
    auto p = fs::temp_directory_path() / "dfa_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    rows.push_back(f);
  }
  return rows;
}

GlobalOptions options() {
  static const fs::path cfg = [] {
    const fs::path p = root() / "tiny.cfg";
    std::ofstream(p) << "data.train = 40\n"
                        "data.val = 10\n"
                        "data.test = 12\n"
                        "data.image_size = 32\n"
                        "net.conv_channels = 4\n"
                        "net.dense = 16\n"
                        "labels.K = 4\n"
                        "stage1.iterations = 12\n"
                        "stage2.iterations = 12\n"
                        "stage3.iterations = 12\n"
                        "train.batch_size = 8\n"
                        "train.eval_every = 6\n"
                        "train.log_every = 3\n"
                        "schedule.t1 = 4\n"
                        "schedule.t2 = 8\n"
                        "patch.size = 17\n"
                        "patch.iterations = 3\n"
                     << "paths.dataset = " << (root() / "data").string() << "\n"
                     << "paths.bundle = " << (root() / "bundle").string() << "\n";
    return p;
  }();
  GlobalOptions g;
  g.config = cfg;
  return g;
}

// Generates and trains once; later tests reuse the outputs.
const fs::path& bundle() {
  static const fs::path b = [] {
    std::ostringstream sink;
    cmd_generate(options(), sink);
    return cmd_train(options(), {}, sink);
  }();
  return b;
}

}  // namespace

TEST(Cli, GeneratePrintsHistogramAndRefusesToOverwrite) {
  GlobalOptions g = options();
  g.out = root() / "gen";
  std::ostringstream out;
  const fs::path dir = cmd_generate(g, out);
  EXPECT_EQ(dir, root() / "gen");
  for (const char* f : {"train/annotations.csv", "val/annotations.csv", "test/annotations.csv", "manifest.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto manifest = cascade::read_manifest(dir / "manifest.txt");
  std::size_t subset_total = 0;
  for (const auto& [k, v] : manifest)
    if (k.rfind("subset.", 0) == 0) subset_total += std::stoul(v);
  EXPECT_EQ(subset_total, 62u);
  EXPECT_EQ(manifest.at("train_count"), "40");
  EXPECT_NE(out.str().find("total"), std::string::npos);
  EXPECT_NE(out.str().find("62"), std::string::npos);

  const std::string first = slurp(dir / "manifest.txt");
  std::ostringstream again;
  EXPECT_THROW(cmd_generate(g, again), OutputExists);
  g.force = true;
  EXPECT_NO_THROW(cmd_generate(g, again));
  EXPECT_EQ(slurp(dir / "manifest.txt"), first);
}

TEST(Cli, SameSeedGivesIdenticalDataset) {
  GlobalOptions a = options(), b = options();
  a.out = root() / "seed_a";
  b.out = root() / "seed_b";
  std::ostringstream sink;
  cmd_generate(a, sink);
  cmd_generate(b, sink);
  EXPECT_EQ(slurp(root() / "seed_a" / "manifest.txt"), slurp(root() / "seed_b" / "manifest.txt"));
  EXPECT_EQ(slurp(root() / "seed_a" / "test" / "annotations.csv"),
            slurp(root() / "seed_b" / "test" / "annotations.csv"));
  GlobalOptions c = options();
  c.out = root() / "seed_c";
  c.seed = 7;
  cmd_generate(c, sink);
  EXPECT_NE(slurp(root() / "seed_a" / "test" / "annotations.csv"),
            slurp(root() / "seed_c" / "test" / "annotations.csv"));
}

TEST(Cli, TrainRequiresMatchingDataset) {
  std::ostringstream sink;
  TrainOptions t;
  t.data = root() / "no_such_data";
  GlobalOptions g = options();
  g.out = root() / "never";
  try {
    cmd_train(g, t, sink);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("dataset not found"), std::string::npos) << e.what();
  }
  bundle();
  g.seed = 5;  // different data hash than the generated set
  t.data = root() / "data";
  EXPECT_THROW(cmd_train(g, t, sink), std::runtime_error);
}

TEST(Cli, TrainWritesBundleLogsAndAssignments) {
  const fs::path b = bundle();
  for (const char* f : {"stage1.ckpt", "stage2.ckpt", "stage3_branch1.ckpt", "stage3_branch2.ckpt", "routing.csv",
                        "manifest.txt", "config.txt", "log_stage1.csv", "log_stage3_branch2.csv",
                        "assignments_stage1.csv", "assignments_stage3.csv"})
    EXPECT_TRUE(fs::exists(b / f)) << f;
  const auto rows = read_csv(b / "assignments_stage2.csv");
  EXPECT_EQ(rows[0], (std::vector<std::string>{"sample_id", "cluster", "error", "distance"}));
  EXPECT_EQ(rows.size(), 41u);
  EXPECT_EQ(read_csv(b / "assignments_stage3.csv")[0].back(), "branch");
  const auto m = cascade::read_manifest(b / "manifest.txt");
  EXPECT_EQ(m.at("train_samples"), "40");
  EXPECT_EQ(m.at("trained_networks"), "4");
}

TEST(Cli, EvaluateGroundTruthScoresPerfectly) {
  const fs::path b = bundle();
  GlobalOptions g = options();
  g.out = root() / "eval_gt";
  EvaluateOptions e;
  e.bundle = b;
  e.ground_truth = true;
  std::ostringstream out;
  const fs::path dir = cmd_evaluate(g, e, out);
  for (int s = 1; s <= 3; ++s) {
    const auto rows = report::read_metrics_csv(dir / ("metrics_stage" + std::to_string(s) + ".csv"));
    ASSERT_EQ(rows.size(), 8u + 1u + 5u);
    for (const auto& r : rows) {
      if (!r.ne) continue;
      EXPECT_EQ(*r.ne, 0.0) << r.subset << "/" << r.landmark;
      EXPECT_EQ(*r.pdl, 1.0);
    }
  }
  EXPECT_TRUE(fs::exists(dir / "pdl_curves.svg"));
  EXPECT_EQ(read_csv(dir / "pdl_curves.csv")[0],
            (std::vector<std::string>{"threshold_px", "stage1", "stage2", "stage3"}));
}

TEST(Cli, EvaluateIsIdempotent) {
  const fs::path b = bundle();
  GlobalOptions g = options();
  EvaluateOptions e;
  e.bundle = b;
  std::ostringstream out;
  g.out = root() / "eval_1";
  cmd_evaluate(g, e, out);
  g.out = root() / "eval_2";
  cmd_evaluate(g, e, out);
  for (const char* f : {"metrics_stage1.csv", "metrics_stage3.csv", "predictions.csv", "pdl_curves.csv"})
    EXPECT_EQ(slurp(root() / "eval_1" / f), slurp(root() / "eval_2" / f)) << f;
  const auto preds = read_csv(root() / "eval_1" / "predictions.csv");
  EXPECT_EQ(preds.size(), 13u);

  e.split = "bogus";
  g.out = root() / "eval_3";
  EXPECT_ANY_THROW(cmd_evaluate(g, e, out));
}

TEST(Cli, InspectClustersMatchesRoutingTable) {
  const fs::path b = bundle();
  GlobalOptions g = options();
  InspectOptions o;
  o.bundle = b;
  o.montage_columns = 3;
  std::ostringstream out;
  g.out = root() / "inspect2";
  const fs::path dir = cmd_inspect_clusters(g, o, out);
  const auto rows = read_csv(dir / "clusters_stage2.csv");
  ASSERT_EQ(rows.size(), 1u + 4u);
  EXPECT_EQ(rows[0][3], "routing_error");
  const auto routing = labels::load_routing_table(b / "routing.csv");
  std::size_t population = 0;
  for (std::size_t j = 0; j < 4; ++j) {
    const auto& r = rows[j + 1];
    EXPECT_EQ(r[0], std::to_string(j));
    population += std::stoul(r[1]);
    if (std::isinf(routing.errors[j]))
      EXPECT_EQ(r[3], "inf");
    else
      EXPECT_EQ(std::stod(r[3]), routing.errors[j]);
  }
  EXPECT_EQ(population, 40u);
  const Tensor montage = synth::read_pgm(dir / "montage_stage2.pgm");
  EXPECT_EQ(montage.shape(), (Shape{1, 4 * 34, 3 * 34}));

  o.stage = 1;
  g.out = root() / "inspect1";
  EXPECT_EQ(read_csv(cmd_inspect_clusters(g, o, out) / "clusters_stage1.csv")[0][3], "c0");
  o.stage = 4;
  EXPECT_THROW(cmd_inspect_clusters(g, o, out), std::invalid_argument);
}

TEST(Cli, CompareBaselinesReusesBundleAndCountsNetworks) {
  const fs::path b = bundle();
  GlobalOptions g = options();
  g.out = root() / "compare";
  CompareOptions c;
  c.bundle = b;
  std::ostringstream out;
  const fs::path dir = cmd_compare_baselines(g, c, out);
  const auto models = read_csv(dir / "models.csv");
  ASSERT_EQ(models.size(), 4u);
  EXPECT_EQ(models[1][0], "DFA");
  EXPECT_EQ(models[1][1], "4");
  EXPECT_EQ(models[2][0], "patch-cascade");
  EXPECT_EQ(models[2][1], "17");
  EXPECT_EQ(read_csv(dir / "compare.csv").size(), 1u + 8u * 3 + 5u * 3);

  GlobalOptions other = options();
  other.out = root() / "compare_bad";
  other.seed = 99;
  EXPECT_THROW(cmd_compare_baselines(other, c, out), std::runtime_error);
}
