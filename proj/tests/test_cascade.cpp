#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "dfa/cascade.hpp"

using namespace dfa;
using namespace dfa::cascade;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dfa_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

CascadeConfig tiny_config() {
  CascadeConfig c;
  c.arch.image_height = c.arch.image_width = 32;
  c.arch.conv_channels = {4};
  c.arch.dense_width = 16;
  c.clusters = 4;
  c.label_scale = 32.0;
  for (TrainConfig* t : {&c.stage1, &c.stage2, &c.stage3}) {
    t->iterations = 20;
    t->batch_size = 8;
    t->schedule.t1 = 7;
    t->schedule.t2 = 14;
    t->log_every = 5;
    t->eval_every = 10;
  }
  c.seed = 3;
  return c;
}

struct Tiny {
  std::vector<synth::SyntheticSample> train, val;
  TrainingRun run;
};

const Tiny& tiny_run() {
  static const Tiny t = [] {
    Tiny r;
    synth::GeneratorConfig g;
    g.count = 50;
    g.image_size = 32;
    const auto data = synth::generate_dataset(g, 8);
    r.train.assign(data.begin(), data.begin() + 40);
    r.val.assign(data.begin() + 40, data.end());
    r.run = train_cascade(r.train, r.val, tiny_config());
    return r;
  }();
  return t;
}

}  // namespace

TEST(Routing, StrictInequalityBoundary) {
  EXPECT_EQ(route(0.3, 0.3), 2);
  EXPECT_EQ(route(std::nextafter(0.3, 0.0), 0.3), 1);
  EXPECT_EQ(route(0.0, 0.0), 2);
  EXPECT_EQ(route(std::numeric_limits<double>::infinity(), 0.3), 2);
}

TEST(Routing, ScoreIsLabelWeightedErrorSum) {
  const labels::RoutingTable t{{0.1, 0.2, labels::kEmptyClusterError}, 0.3};
  EXPECT_DOUBLE_EQ(routing_score(std::vector<double>{0.5, 1.0, 0.0}, t), 0.25);
  // an empty cluster matters only when it carries weight
  EXPECT_TRUE(std::isinf(routing_score(std::vector<double>{0.5, 1.0, 1e-300}, t)));
  EXPECT_THROW(routing_score(std::vector<double>{1.0}, t), std::invalid_argument);
}

// The routed partition must equal a brute-force scan: recompute G from the
// definition and compare it against the threshold.
TEST(Routing, PartitionMatchesBruteForceScan) {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t k = 20;
  labels::RoutingTable t;
  t.epsilon = 0.3;
  for (std::size_t i = 0; i < k; ++i) t.errors.push_back(0.05 + 0.5 * u(gen));
  t.errors[7] = labels::kEmptyClusterError;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> f(k);
    for (double& v : f) v = std::exp(-20.0 * u(gen) / 20.0) * (u(gen) < 0.5 ? 0.3 : 1.0);
    if (trial % 3 == 0) f[7] = 0.0;
    double g = 0.0;
    bool infinite = false;
    for (std::size_t i = 0; i < k; ++i) {
      if (std::isinf(t.errors[i])) {
        infinite |= f[i] > 0.0;
        continue;
      }
      g += t.errors[i] * f[i];
    }
    if (infinite) g = std::numeric_limits<double>::infinity();
    const double score = routing_score(f, t);
    EXPECT_EQ(score, g);
    const int expected = g < t.epsilon ? 1 : 2;
    EXPECT_EQ(route(score, t.epsilon), expected) << "trial " << trial;
  }

  // A scaled-down table exercises both sides of the threshold.
  for (double& e : t.errors)
    if (std::isfinite(e)) e *= 0.1;  // mean G close to epsilon
  std::array<std::size_t, 2> seen{};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> f(k);
    for (double& v : f) v = u(gen);
    f[7] = 0.0;
    double g = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      if (i != 7) g += t.errors[i] * f[i];
    EXPECT_EQ(route(routing_score(f, t), t.epsilon), g < t.epsilon ? 1 : 2);
    ++seen[g < t.epsilon ? 0 : 1];
  }
  EXPECT_GT(seen[0], 0u);
  EXPECT_GT(seen[1], 0u);
}

TEST(Compose, AddsCorrectionsAndKeepsVisibility) {
  const geom::LandmarkSet prev{{{0.1, 0.2}, {-0.3, 0.4}},
                               {geom::Visibility::Visible, geom::Visibility::Truncated}};
  const std::vector<double> c1{0.01, -0.02, 0.03, 0.04}, c2{-0.05, 0.0, 0.1, 0.2};
  const auto once = compose(compose(prev, c1), c2);
  std::vector<double> sum(4);
  for (std::size_t i = 0; i < 4; ++i) sum[i] = c1[i] + c2[i];
  const auto both = compose(prev, sum);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(once.coords[i].x, both.coords[i].x, 1e-15);
    EXPECT_NEAR(once.coords[i].y, both.coords[i].y, 1e-15);
  }
  EXPECT_EQ(once.visibility, prev.visibility);
  EXPECT_EQ(compose(prev, std::vector<double>(4, 0.0)), prev);
  EXPECT_THROW(compose(prev, std::vector<double>(3)), std::invalid_argument);
}

TEST(Config, Validation) {
  CascadeConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.clusters = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.epsilon = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.stage2.iterations = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(EndToEnd, TinyCascadeTrainsAndPredicts) {
  const Tiny& t = tiny_run();
  const CascadeModel& m = t.run.model;
  ASSERT_TRUE(m.trained());
  EXPECT_EQ(m.stage1.arch().aux_length, 0u);
  EXPECT_EQ(m.stage2.arch().aux_length, 16u);           // 2N stage-1 coordinates
  EXPECT_EQ(m.stage3[0].arch().aux_length, 16u + 4u);   // 2N stage-2 coordinates + K labels
  EXPECT_EQ(m.routing.errors.size(), 4u);
  EXPECT_EQ(t.run.stage1.assignment.assignments.size(), 40u);
  EXPECT_EQ(t.run.stage3.routes.size(), 40u);
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_LT(t.run.stage2.assignment.assignments[i], 4u);
    EXPECT_GE(t.run.stage2.assignment.distances[i], 0.0);
  }
  for (int r : t.run.stage3.routes) EXPECT_TRUE(r == 1 || r == 2);

  const auto preds = predict(m, t.val);
  ASSERT_EQ(preds.size(), t.val.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    EXPECT_EQ(p.branch, route(p.routing_score, m.routing.epsilon));
    EXPECT_EQ(p.stage2_labels.size(), 4u);
    EXPECT_EQ(p.stage3.visibility, p.stage1.visibility);
    for (int s = 1; s <= 3; ++s)
      for (const auto& c : p.stage(s).coords) EXPECT_TRUE(std::isfinite(c.x) && std::isfinite(c.y));
    const auto single = predict(m, t.val[i].image, t.val[i].box);
    EXPECT_EQ(single.stage3, p.stage3);
  }
}

TEST(EndToEnd, TrainingIsDeterministic) {
  const Tiny& t = tiny_run();
  const TrainingRun again = train_cascade(t.train, t.val, tiny_config());
  EXPECT_EQ(again.model.stage3[1].parameters(), t.run.model.stage3[1].parameters());
  EXPECT_EQ(again.model.routing, t.run.model.routing);
}

TEST(EndToEnd, LogsFollowScheduleAndValidationCadence) {
  const auto& log = tiny_run().run.stage1.log;
  ASSERT_FALSE(log.empty());
  for (const LogRow& r : log) {
    const double expected = schedule_weight(static_cast<double>(r.iteration), 1.0, tiny_config().stage1.schedule);
    EXPECT_EQ(r.loss.alpha, expected);
    EXPECT_EQ(r.loss.beta, expected);
    EXPECT_TRUE(std::isfinite(r.loss.total));
  }
  std::size_t validated = 0;
  for (const LogRow& r : log) validated += r.validation_ne.has_value();
  EXPECT_EQ(validated, 2u);  // iterations 9 and 19

  const auto dir = temp_dir("training_log");
  write_training_log(dir / "log.csv", log);
  std::ifstream in(dir / "log.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "iteration,L_pos,L_vis,L_labels,alpha,beta,validation_ne");
  std::size_t rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  EXPECT_EQ(rows, log.size());
}

TEST(Bundle, RoundTripGivesIdenticalPredictions) {
  const Tiny& t = tiny_run();
  const auto dir = temp_dir("bundle");
  save_bundle(dir, t.run.model, {{"seed", "3"}});
  const CascadeModel back = load_bundle(dir);
  EXPECT_EQ(back.stage1.parameters(), t.run.model.stage1.parameters());
  EXPECT_EQ(back.routing, t.run.model.routing);
  const auto a = predict(t.run.model, t.val), b = predict(back, t.val);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].pixels, b[i].pixels);
  const auto m = read_manifest(dir / "manifest.txt");
  EXPECT_EQ(m.at("seed"), "3");
  EXPECT_EQ(m.at("trained_networks"), "4");

  std::filesystem::remove(dir / "stage2.ckpt");
  EXPECT_THROW(load_bundle(dir), std::runtime_error);
  EXPECT_THROW(load_bundle(dir / "nope"), std::runtime_error);
  EXPECT_THROW(save_bundle(dir, CascadeModel{}, {}), std::logic_error);
}

TEST(Cascade, NetworkCount) { EXPECT_EQ(CascadeModel::trained_network_count(), 4u); }
