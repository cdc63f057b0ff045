#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfa/grad_check.hpp"
#include "dfa/graph.hpp"
#include "dfa/optimizer.hpp"
#include "dfa/tensor.hpp"

using namespace dfa;
using namespace dfa::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.values()) v = d(gen);
  return t;
}

// Random-target squared error keeps every output coordinate in the gradient.
NodeId readout(Graph& g, NodeId x, const Tensor& target) {
  return g.euclidean_loss(x, target, Tensor(target.shape(), 1.0));
}

constexpr double kTol = 1e-4;
constexpr int kInstances = 20;

void expect_gradients_match(ParameterSet& params, const LossBuilder& build, std::uint64_t seed) {
  const GradCheckReport r = grad_check(params, build, 1e-6, {0, seed});
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_relative_error, kTol) << "worst " << r.worst_parameter;
}

}  // namespace

TEST(Tensor, ShapeAndReshape) {
  Tensor t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(shape_size({2, 3, 4}), 24u);
  EXPECT_EQ(t.reshaped({6, 4}).dim(0), 6u);
  EXPECT_THROW(t.reshaped({5, 5}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0}), std::invalid_argument);
  t[3] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Graph, ConvMatchesDirectLoops) {
  std::mt19937_64 gen(1);
  const Tensor x = random_tensor({2, 2, 5, 6}, gen), w = random_tensor({3, 2, 3, 3}, gen), b = random_tensor({3}, gen);
  Graph g;
  const NodeId y = g.conv2d(g.input(x), g.parameter("w", w), g.parameter("b", b));
  const Tensor& out = g.value(y);
  ASSERT_EQ(out.shape(), (Shape{2, 3, 5, 6}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o)
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 6; ++c) {
          double s = b[o];
          for (std::size_t ci = 0; ci < 2; ++ci)
            for (int dr = -1; dr <= 1; ++dr)
              for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= 5 || cc < 0 || cc >= 6) continue;
                s += x[((n * 2 + ci) * 5 + rr) * 6 + cc] * w[((o * 2 + ci) * 3 + (dr + 1)) * 3 + (dc + 1)];
              }
          EXPECT_NEAR(out[((n * 3 + o) * 5 + r) * 6 + c], s, 1e-12);
        }
}

TEST(Graph, DenseAndConcatForward) {
  Graph g;
  const NodeId a = g.input(Tensor({2, 2}, {1, 2, 3, 4}));
  const NodeId b = g.input(Tensor({2, 1}, {5, 6}));
  const NodeId cat = g.concat(a, b);
  EXPECT_EQ(g.value(cat).values()[2], 5.0);
  EXPECT_EQ(g.value(cat).values()[5], 6.0);
  const NodeId y = g.dense(cat, g.parameter("w", Tensor({1, 3}, {1, 10, 100})), g.parameter("b", Tensor({1}, {0.5})));
  EXPECT_DOUBLE_EQ(g.value(y)[0], 1 + 20 + 500 + 0.5);
  EXPECT_DOUBLE_EQ(g.value(y)[1], 3 + 40 + 600 + 0.5);
}

TEST(Graph, MaxPoolFirstMaximumWinsTies) {
  Graph g;
  Tensor x({1, 1, 2, 2}, {7, 7, 7, 7});
  ParameterSet p{{"x", x}};
  const NodeId pooled = g.max_pool(g.parameter("x", p.at("x")), 2);
  EXPECT_EQ(g.value(pooled)[0], 7.0);
  const auto grads = backward(g, g.reduce_sum(pooled));
  EXPECT_EQ(grads.at("x").values()[0], 1.0);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(grads.at("x").values()[i], 0.0);
}

TEST(Graph, LossValues) {
  Graph g;
  const NodeId pred = g.input(Tensor({1, 3}, {1.0, 2.0, 4.0}));
  const NodeId l = g.euclidean_loss(pred, Tensor({1, 3}, {0.0, 0.0, 0.0}), Tensor({1, 3}, {1.0, 1.0, 0.0}));
  EXPECT_DOUBLE_EQ(g.value(l)[0], (1.0 + 4.0) / 2.0);
  const NodeId none = g.euclidean_loss(pred, Tensor({1, 3}), Tensor({1, 3}));
  EXPECT_EQ(g.value(none)[0], 0.0);

  const NodeId logits = g.input(Tensor({1, 6}, {0.0, 1.0, 2.0, 3.0, 0.0, 0.0}));
  const NodeId ll = g.logistic_loss(logits, {2, 0});
  const double row1 = -std::log(std::exp(2.0) / (1 + std::exp(1.0) + std::exp(2.0)));
  const double row2 = -std::log(std::exp(3.0) / (std::exp(3.0) + 2.0));
  EXPECT_NEAR(g.value(ll)[0], (row1 + row2) / 2.0, 1e-14);
  EXPECT_NEAR(euclidean_loss(std::vector<double>{1, 2, 4}, std::vector<double>{0, 0, 0}, std::vector<double>{1, 1, 0}),
              2.5, 1e-15);
  EXPECT_NEAR(multinomial_logistic_loss(std::vector<double>{0, 1, 2, 3, 0, 0}, std::vector<int>{2, 0}),
              (row1 + row2) / 2.0, 1e-14);
}

TEST(Graph, BadShapesThrow) {
  Graph g;
  const NodeId a = g.input(Tensor({2, 3}));
  EXPECT_THROW(g.concat(a, g.input(Tensor({3, 1}))), std::invalid_argument);
  EXPECT_THROW(g.dense(a, g.input(Tensor({4, 2})), g.input(Tensor({4}))), std::invalid_argument);
  EXPECT_THROW(g.logistic_loss(a, {0}), std::invalid_argument);
  EXPECT_THROW(g.backward(a), std::invalid_argument);
}

TEST(Graph, BackwardResetsAndUnusedParametersGetZeros) {
  ParameterSet p{{"used", Tensor({1, 2}, {1.0, -2.0})}, {"unused", Tensor({3}, 5.0)}};
  Graph g;
  const NodeId u = g.parameter("used", p.at("used"));
  g.parameter("unused", p.at("unused"));
  const NodeId loss = g.reduce_sum(g.scale(u, 3.0));
  const auto first = backward(g, loss);
  const auto second = backward(g, loss);
  EXPECT_EQ(first.at("used"), second.at("used"));
  EXPECT_EQ(first.at("used").values()[0], 3.0);
  for (double v : first.at("unused").values()) EXPECT_EQ(v, 0.0);
}

TEST(Graph, AddAccumulatesSharedInputs) {
  ParameterSet p{{"x", Tensor({2}, {1.0, 2.0})}};
  Graph g;
  const NodeId x = g.parameter("x", p.at("x"));
  const auto grads = backward(g, g.reduce_sum(g.add({x, x, g.scale(x, 2.0)})));
  EXPECT_EQ(grads.at("x").values()[0], 4.0);
  EXPECT_EQ(grads.at("x").values()[1], 4.0);
}

// --- finite-difference checks, one per op, 20 random instances each -------

TEST(GradCheck, Conv2d) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 gen(100 + i);
    const Tensor x = random_tensor({2, 2, 5, 5}, gen), target = random_tensor({2, 3, 5, 5}, gen);
    ParameterSet p{{"w", random_tensor({3, 2, 3, 3}, gen)}, {"b", random_tensor({3}, gen)}, {"x", x}};
    expect_gradients_match(
        p,
        [&](Graph& g) {
          return readout(g, g.conv2d(g.parameter("x", p.at("x")), g.parameter("w", p.at("w")), g.parameter("b", p.at("b"))),
                         target);
        },
        i);
  }
}

TEST(GradCheck, Relu) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 gen(200 + i);
    const Tensor target = random_tensor({3, 7}, gen);
    ParameterSet p{{"x", random_tensor({3, 7}, gen)}};
    expect_gradients_match(p, [&](Graph& g) { return readout(g, g.relu(g.parameter("x", p.at("x"))), target); }, i);
  }
}

TEST(GradCheck, MaxPool) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 gen(300 + i);
    const std::size_t w = 2 + i % 2;
    const Tensor target = random_tensor({2, 2, 2, 2}, gen);
    ParameterSet p{{"x", random_tensor({2, 2, 2 * w + i % 2, 2 * w}, gen)}};
    expect_gradients_match(p, [&](Graph& g) { return readout(g, g.max_pool(g.parameter("x", p.at("x")), w), target); },
                           i);
  }
}

TEST(GradCheck, FlattenConcatDense) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 gen(400 + i);
    const Tensor target = random_tensor({2, 4}, gen);
    ParameterSet p{{"x", random_tensor({2, 2, 2, 2}, gen)},
                   {"aux", random_tensor({2, 3}, gen)},
                   {"w", random_tensor({4, 11}, gen)},
                   {"b", random_tensor({4}, gen)}};
    expect_gradients_match(
        p,
        [&](Graph& g) {
          const NodeId cat = g.concat(g.flatten(g.parameter("x", p.at("x"))), g.parameter("aux", p.at("aux")));
          return readout(g, g.dense(cat, g.parameter("w", p.at("w")), g.parameter("b", p.at("b"))), target);
        },
        i);
  }
}

TEST(GradCheck, AddScaleReduceSum) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 gen(500 + i);
    ParameterSet p{{"a", random_tensor({2, 3}, gen)}, {"b", random_tensor({2, 3}, gen)}};
    const Tensor target = random_tensor({2, 3}, gen);
    expect_gradients_match(
        p,
        [&](Graph& g) {
          const NodeId a = g.parameter("a", p.at("a")), b = g.parameter("b", p.at("b"));
          const NodeId s = g.add({a, g.scale(b, -1.7), a});
          return g.add({g.scale(g.reduce_sum(s), 0.3), readout(g, s, target)});
        },
        i);
  }
}

TEST(GradCheck, EuclideanLossWithMask) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 gen(600 + i);
    Tensor mask({3, 4});
    std::bernoulli_distribution keep(0.6);
    for (double& m : mask.values()) m = keep(gen) ? 1.0 : 0.0;
    const Tensor target = random_tensor({3, 4}, gen);
    ParameterSet p{{"x", random_tensor({3, 4}, gen)}};
    expect_gradients_match(p, [&](Graph& g) { return g.euclidean_loss(g.parameter("x", p.at("x")), target, mask); },
                           i);
  }
}

TEST(GradCheck, LogisticLoss) {
  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 gen(700 + i);
    std::uniform_int_distribution<int> cls(0, 2);
    std::vector<int> labels(8);
    for (int& l : labels) l = cls(gen);
    ParameterSet p{{"x", random_tensor({2, 12}, gen, -3.0, 3.0)}};
    expect_gradients_match(p, [&](Graph& g) { return g.logistic_loss(g.parameter("x", p.at("x")), labels); }, i);
  }
}

TEST(GradCheck, RejectsBadEpsilon) {
  ParameterSet p{{"x", Tensor({1}, 1.0)}};
  auto build = [&](Graph& g) { return g.reduce_sum(g.parameter("x", p.at("x"))); };
  EXPECT_THROW(grad_check(p, build, 1e-2), std::invalid_argument);
  EXPECT_THROW(grad_check(p, build, 1e-9), std::invalid_argument);
}

TEST(GradCheck, FlagsProbesAcrossKinks) {
  ParameterSet p{{"x", Tensor({1, 1}, {1e-8})}};
  const auto r = grad_check(p, [&](Graph& g) { return g.reduce_sum(g.relu(g.parameter("x", p.at("x")))); }, 1e-6);
  EXPECT_EQ(r.checked, 0u);
  EXPECT_EQ(r.skipped_kinks, 1u);
}

TEST(Sgd, MomentumUpdateMatchesHandComputation) {
  ParameterSet p{{"w", Tensor({2}, {1.0, -1.0})}};
  SgdMomentum opt(0.1, 0.9);
  GradientMap g{{"w", Tensor({2}, {0.5, 2.0})}};
  opt.step(p, g);
  // v = g; w -= lr v
  EXPECT_DOUBLE_EQ(p.at("w")[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p.at("w")[1], -1.0 - 0.2);
  opt.step(p, g);
  // v = 0.9 g + g
  EXPECT_DOUBLE_EQ(p.at("w")[0], 0.95 - 0.1 * 0.95);
  EXPECT_DOUBLE_EQ(p.at("w")[1], -1.2 - 0.1 * 3.8);
}

TEST(Sgd, RejectsNonFiniteAndUnknownGradients) {
  ParameterSet p{{"w", Tensor({1}, 1.0)}};
  SgdMomentum opt(0.1, 0.9);
  EXPECT_THROW(opt.step(p, {{"w", Tensor({1}, std::nan(""))}}), std::runtime_error);
  EXPECT_EQ(p.at("w")[0], 1.0);
  EXPECT_THROW(opt.step(p, {{"v", Tensor({1}, 1.0)}}), std::invalid_argument);
}
