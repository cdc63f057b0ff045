#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dfa/cascade.hpp"
#include "dfa/checkpoint.hpp"
#include "dfa/grad_check.hpp"
#include "dfa/network.hpp"

using namespace dfa;
using namespace dfa::ad;

namespace {

ArchDescriptor tiny_arch(std::size_t aux = 3) {
  ArchDescriptor a;
  a.image_height = a.image_width = 8;
  a.conv_channels = {2, 3};
  a.dense_width = 6;
  a.aux_length = aux;
  a.landmarks = 2;
  a.clusters = 3;
  return a;
}

Tensor random_tensor(Shape shape, std::mt19937_64& gen) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (double& v : t.values()) v = d(gen);
  return t;
}

}  // namespace

TEST(Arch, TrunkFeaturesAndShapes) {
  const ArchDescriptor d;  // 64x64, conv 8/16, pool 2
  EXPECT_EQ(d.trunk_features(), 16u * 16u * 16u);
  const auto shapes = parameter_shapes(tiny_arch());
  EXPECT_EQ(shapes.at("conv0.weight"), (Shape{2, 1, 3, 3}));
  EXPECT_EQ(shapes.at("conv1.weight"), (Shape{3, 2, 3, 3}));
  EXPECT_EQ(shapes.at("dense.weight"), (Shape{6, 12 + 3}));
  EXPECT_EQ(shapes.at("pos.weight"), (Shape{4, 6}));
  EXPECT_EQ(shapes.at("vis.bias"), (Shape{6}));
  EXPECT_EQ(shapes.at("label.weight"), (Shape{3, 6}));
}

TEST(Arch, StringRoundTripAndValidation) {
  const ArchDescriptor a = tiny_arch();
  EXPECT_EQ(ArchDescriptor::parse(a.to_string()), a);
  ArchDescriptor bad = a;
  bad.kernel = 4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = a;
  bad.conv_channels = {2, 3, 4, 5};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(ArchDescriptor::parse("input=1x8x8;bogus=1"), std::invalid_argument);
}

TEST(Network, GlorotBoundsAndZeroBiases) {
  const StageNetwork net = StageNetwork::initialize(tiny_arch(), 7);
  for (const auto& [name, t] : net.parameters()) {
    if (name.ends_with(".bias")) {
      for (double v : t.values()) EXPECT_EQ(v, 0.0) << name;
      continue;
    }
    std::size_t fan_in = 1, fan_out = 1;
    if (t.rank() == 4) {
      fan_in = t.dim(1) * t.dim(2) * t.dim(3);
      fan_out = t.dim(0) * t.dim(2) * t.dim(3);
    } else {
      fan_in = t.dim(1);
      fan_out = t.dim(0);
    }
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double v : t.values()) EXPECT_LE(std::abs(v), s) << name;
  }
  EXPECT_EQ(net.parameters(), StageNetwork::initialize(tiny_arch(), 7).parameters());
  EXPECT_NE(net.parameters(), StageNetwork::initialize(tiny_arch(), 8).parameters());
}

TEST(Network, ForwardEqualsEvaluate) {
  std::mt19937_64 gen(3);
  const StageNetwork net = StageNetwork::initialize(tiny_arch(), 11);
  const Tensor x = random_tensor({3, 1, 8, 8}, gen), aux = random_tensor({3, 3}, gen);
  Graph g;
  const HeadNodes h = net.forward(g, x, aux);
  const HeadValues v = net.evaluate(x, aux);
  EXPECT_EQ(g.value(h.positions), v.positions);
  EXPECT_EQ(g.value(h.visibility_logits), v.visibility_logits);
  EXPECT_EQ(g.value(h.pseudolabels), v.pseudolabels);
  EXPECT_EQ(v.positions.shape(), (Shape{3, 4}));
  EXPECT_EQ(v.visibility_logits.shape(), (Shape{3, 6}));
  EXPECT_EQ(v.pseudolabels.shape(), (Shape{3, 3}));
}

TEST(Network, MismatchedParametersRejected) {
  ParameterSet p = StageNetwork::initialize(tiny_arch(), 1).parameters();
  p.erase("label.bias");
  EXPECT_THROW(StageNetwork(tiny_arch(), p), std::invalid_argument);
  p = StageNetwork::initialize(tiny_arch(), 1).parameters();
  p.at("pos.bias") = Tensor({5});
  EXPECT_THROW(StageNetwork(tiny_arch(), p), std::invalid_argument);
}

// Every head of a full stage network, with and without aux input.
TEST(GradCheck, FullStageNetworkHeads) {
  for (int i = 0; i < 20; ++i) {
    std::mt19937_64 gen(900 + i);
    const std::size_t aux = i % 2 ? 3 : 0;
    const StageNetwork net = StageNetwork::initialize(tiny_arch(aux), 50 + i);
    const Tensor x = random_tensor({2, 1, 8, 8}, gen);
    const Tensor a = aux ? random_tensor({2, aux}, gen) : Tensor();
    const GradCheckReport r = grad_check(net, x, a, 1e-6, {0, static_cast<std::uint64_t>(i)});
    EXPECT_GT(r.checked, net.parameter_count() / 2) << "instance " << i;
    EXPECT_LT(r.max_relative_error, 1e-4) << "instance " << i << " worst " << r.worst_parameter;
  }
}

TEST(Checkpoint, RoundTripIsExactAndByteStable) {
  const StageNetwork net = StageNetwork::initialize(tiny_arch(), 5);
  std::stringstream a;
  write_checkpoint(a, net);
  const StageNetwork back = read_checkpoint(a);
  EXPECT_EQ(back.arch(), net.arch());
  EXPECT_EQ(back.parameters(), net.parameters());
  std::stringstream b;
  write_checkpoint(b, back);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, 8), std::string("DFACKPT\0", 8));
}

TEST(Checkpoint, CorruptInputRejected) {
  std::stringstream s;
  write_checkpoint(s, StageNetwork::initialize(tiny_arch(), 5));
  std::string bytes = s.str();
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream b1(bad);
  EXPECT_THROW(read_checkpoint(b1), std::runtime_error);
  std::stringstream b2(bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(read_checkpoint(b2), std::runtime_error);
  bad = bytes;
  bad[8] = 9;  // version
  std::stringstream b3(bad);
  EXPECT_THROW(read_checkpoint(b3), std::runtime_error);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), std::runtime_error);
}

TEST(WarmStart, StartsFromPreviousEstimate) {
  std::mt19937_64 gen(4);
  const StageNetwork prev = StageNetwork::initialize(tiny_arch(0), 21);
  const StageNetwork next = cascade::warm_start(prev, tiny_arch(4), 22);
  for (const auto& name : {"conv0.weight", "conv0.bias", "conv1.weight", "dense.bias", "vis.weight", "vis.bias"})
    EXPECT_EQ(next.parameters().at(name), prev.parameters().at(name)) << name;
  const Tensor& w = next.parameters().at("dense.weight");
  const Tensor& wp = prev.parameters().at("dense.weight");
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(w[r * 16 + c], wp[r * 12 + c]);
    for (std::size_t c = 12; c < 16; ++c) EXPECT_EQ(w[r * 16 + c], 0.0);
  }
  const Tensor x = random_tensor({3, 1, 8, 8}, gen), aux = random_tensor({3, 4}, gen);
  const HeadValues hv = next.evaluate(x, aux), hp = prev.evaluate(x, Tensor());
  for (double v : hv.positions.values()) EXPECT_EQ(v, 0.0);
  for (std::size_t i = 0; i < hv.visibility_logits.size(); ++i)
    EXPECT_NEAR(hv.visibility_logits[i], hp.visibility_logits[i], 1e-12);

  ArchDescriptor other = tiny_arch(4);
  other.dense_width = 7;
  EXPECT_THROW(cascade::warm_start(prev, other, 1), std::invalid_argument);
}
