#include <gtest/gtest.h>

#include <random>

#include "dfa/grad_check.hpp"
#include "dfa/optimizer.hpp"
#include "dfa/trainer.hpp"

using namespace dfa;
using namespace dfa::cascade;

namespace {

ad::ArchDescriptor tiny_arch() {
  ad::ArchDescriptor a;
  a.image_height = a.image_width = 8;
  a.conv_channels = {2};
  a.dense_width = 5;
  a.landmarks = 2;
  a.clusters = 3;
  return a;
}

StageData random_stage_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  StageData d;
  Tensor images({n, 1, 8, 8});
  for (double& v : images.values()) v = u(gen);
  d.images = std::make_shared<const Tensor>(std::move(images));
  d.landmarks = 2;
  d.clusters = 3;
  for (std::size_t i = 0; i < n * 4; ++i) {
    d.pos_target.push_back(u(gen) - 0.5);
    d.pos_mask.push_back(i % 7 == 3 ? 0.0 : 1.0);
  }
  for (std::size_t i = 0; i < n * 2; ++i) d.visibility.push_back(static_cast<int>(i % 3));
  for (std::size_t i = 0; i < n * 3; ++i) d.label_target.push_back(u(gen));
  for (std::size_t i = 0; i < n; ++i) d.rows.push_back(i);
  return d;
}

TrainConfig small_config(std::size_t iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.batch_size = 4;
  c.learning_rate = 0.05;
  c.schedule.t1 = 2;
  c.schedule.t2 = 4;
  c.log_every = 1;
  return c;
}

}  // namespace

TEST(Schedule, AsWrittenBreakpoints) {
  LossSchedule s;  // t1 = 2000, t2 = 4000
  for (double base : {1.0, 0.5, 3.0}) {
    EXPECT_EQ(schedule_weight(1000, base, s), base);
    EXPECT_EQ(schedule_weight(3000, base, s), 0.5 * base);
    EXPECT_EQ(schedule_weight(5000, base, s), 0.0);
    EXPECT_EQ(schedule_weight(1999, base, s), base);
    EXPECT_EQ(schedule_weight(2000, base, s), 0.0);  // the ramp restarts at zero
    EXPECT_EQ(schedule_weight(4000, base, s), 0.0);
  }
}

TEST(Schedule, DecayVariant) {
  LossSchedule s;
  s.mode = ScheduleMode::Decay;
  EXPECT_EQ(schedule_weight(1000, 2.0, s), 2.0);
  EXPECT_EQ(schedule_weight(2000, 2.0, s), 2.0);
  EXPECT_EQ(schedule_weight(3000, 2.0, s), 1.0);
  EXPECT_EQ(schedule_weight(3500, 2.0, s), 0.5);
  EXPECT_EQ(schedule_weight(4000, 2.0, s), 0.0);
}

TEST(Schedule, Validation) {
  LossSchedule s;
  s.t2 = s.t1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.alpha = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(OverallLoss, WeightedSumOfTerms) {
  const StageData d = random_stage_data(3, 1);
  const auto net = ad::StageNetwork::initialize(tiny_arch(), 2);
  const std::vector<std::size_t> rows{0, 1, 2};
  ad::Graph g;
  const auto heads = net.forward(g, *d.images, Tensor());
  const LossNodes l = overall_loss(g, heads, gather_rows(d.pos_target, 4, rows), gather_rows(d.pos_mask, 4, rows),
                                   d.visibility, gather_rows(d.label_target, 3, rows), 0.7, 0.2);
  const double pos = ad::euclidean_loss(g.value(heads.positions).values(), d.pos_target, d.pos_mask);
  const double vis = ad::multinomial_logistic_loss(g.value(heads.visibility_logits).values(), d.visibility);
  const std::vector<double> ones(9, 1.0);
  const double lab = ad::euclidean_loss(g.value(heads.pseudolabels).values(), d.label_target, ones);
  EXPECT_DOUBLE_EQ(g.value(l.positions)[0], pos);
  EXPECT_DOUBLE_EQ(g.value(l.visibility)[0], vis);
  EXPECT_DOUBLE_EQ(g.value(l.labels)[0], lab);
  EXPECT_NEAR(g.value(l.total)[0], pos + 0.7 * vis + 0.2 * lab, 1e-14);
}

TEST(OverallLoss, GradientMatchesFiniteDifferences) {
  const StageData d = random_stage_data(2, 3);
  auto net = ad::StageNetwork::initialize(tiny_arch(), 4);
  const std::vector<std::size_t> rows{0, 1};
  const auto r = ad::grad_check(
      net.parameters(),
      [&](ad::Graph& g) {
        const auto heads = net.forward(g, *d.images, Tensor());
        return overall_loss(g, heads, gather_rows(d.pos_target, 4, rows), gather_rows(d.pos_mask, 4, rows),
                            std::vector<int>(d.visibility.begin(), d.visibility.begin() + 4),
                            gather_rows(d.label_target, 3, rows), 0.6, 1.3)
            .total;
      },
      1e-6);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(Train, DeterministicInSeed) {
  const StageData d = random_stage_data(10, 5);
  const auto init = ad::StageNetwork::initialize(tiny_arch(), 6);
  const auto a = train_network(init, d, small_config(12), 99);
  const auto b = train_network(init, d, small_config(12), 99);
  const auto c = train_network(init, d, small_config(12), 100);
  EXPECT_EQ(a.net.parameters(), b.net.parameters());
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss.total, b.log[i].loss.total);
  EXPECT_NE(a.net.parameters(), c.net.parameters());
}

// With both auxiliary terms off the trainer is plain SGD on L_pos.
TEST(Train, FlagsOffMatchesHandWrittenPositionOnlyLoop) {
  const StageData d = random_stage_data(9, 7);
  TrainConfig cfg = small_config(8);
  cfg.use_visibility = false;
  cfg.use_labels = false;
  const auto init = ad::StageNetwork::initialize(tiny_arch(), 8);
  const auto run = train_network(init, d, cfg, 42);

  // Reproduce the batch order: shuffle of `rows` each epoch from the same seed.
  ad::StageNetwork net = init;
  ad::SgdMomentum sgd(cfg.learning_rate, cfg.momentum);
  std::mt19937_64 gen(42);
  std::vector<std::size_t> order = d.rows;
  std::size_t cursor = order.size();
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), gen);
        cursor = 0;
      }
      rows.push_back(order[cursor++]);
    }
    ad::Graph g;
    const auto heads = net.forward(g, gather_images(*d.images, rows), Tensor());
    const auto loss = g.euclidean_loss(heads.positions, gather_rows(d.pos_target, 4, rows),
                                       gather_rows(d.pos_mask, 4, rows));
    ASSERT_DOUBLE_EQ(run.log[t].loss.positions, g.value(loss)[0]) << "iteration " << t;
    EXPECT_EQ(run.log[t].loss.alpha, 0.0);
    EXPECT_EQ(run.log[t].loss.beta, 0.0);
    sgd.step(net.parameters(), ad::backward(g, loss));
  }
  for (const auto& [name, t] : net.parameters())
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(run.net.parameters().at(name)[i], t[i], 1e-12) << name;
}

TEST(Train, LogCoversAllScheduleSegments) {
  const StageData d = random_stage_data(8, 9);
  TrainConfig cfg = small_config(6);  // t1 = 2, t2 = 4
  cfg.eval_every = 3;
  int calls = 0;
  const auto run = train_network(ad::StageNetwork::initialize(tiny_arch(), 1), d, cfg, 3,
                                 [&](const ad::StageNetwork&) { return ++calls * 0.1; });
  ASSERT_EQ(run.log.size(), 6u);
  const double expected_alpha[] = {1, 1, 0, 0.5, 0, 0};
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(run.log[t].iteration, t);
    EXPECT_EQ(run.log[t].loss.alpha, expected_alpha[t]);
    EXPECT_EQ(run.log[t].loss.beta, expected_alpha[t]);
  }
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(run.log[2].validation_ne.has_value());
  EXPECT_TRUE(run.log[5].validation_ne.has_value());
  EXPECT_FALSE(run.log[3].validation_ne.has_value());
}

TEST(Train, RowsRestrictTrainingSamples) {
  StageData d = random_stage_data(8, 10);
  d.rows = {1, 3};
  StageData moved = d;
  // Rows outside the subset never influence training.
  for (std::size_t i = 0; i < 8; ++i)
    if (i != 1 && i != 3)
      for (std::size_t k = 0; k < 4; ++k) moved.pos_target[i * 4 + k] += 100.0;
  const auto init = ad::StageNetwork::initialize(tiny_arch(), 1);
  EXPECT_EQ(train_network(init, d, small_config(5), 1).net.parameters(),
            train_network(init, moved, small_config(5), 1).net.parameters());
}

TEST(Train, DivergenceAborts) {
  StageData d = random_stage_data(6, 11);
  for (double& v : d.pos_target) v *= 1e300;  // squared residual overflows
  try {
    train_network(ad::StageNetwork::initialize(tiny_arch(), 1), d, small_config(5), 1);
    FAIL() << "expected a divergence error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsMismatchedHeads) {
  const StageData d = random_stage_data(4, 12);
  ad::ArchDescriptor a = tiny_arch();
  a.clusters = 4;
  EXPECT_THROW(train_network(ad::StageNetwork::initialize(a, 1), d, small_config(1), 1), std::invalid_argument);
  StageData empty_rows = d;
  empty_rows.rows.clear();
  EXPECT_THROW(train_network(ad::StageNetwork::initialize(tiny_arch(), 1), empty_rows, small_config(1), 1),
               std::invalid_argument);
}

TEST(EvaluateAll, ChunkSizeDoesNotChangeOutput) {
  const StageData d = random_stage_data(10, 13);
  const auto net = ad::StageNetwork::initialize(tiny_arch(), 2);
  const auto a = evaluate_all(net, *d.images, {}, 3);
  const auto b = evaluate_all(net, *d.images, {}, 64);
  const auto whole = net.evaluate(*d.images, Tensor());
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.pseudolabels, b.pseudolabels);
  for (std::size_t i = 0; i < whole.positions.size(); ++i) EXPECT_NEAR(a.positions[i], whole.positions[i], 1e-12);
}
