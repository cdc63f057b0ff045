#include <benchmark/benchmark.h>
#include <malloc.h>

#include <random>

#include "dfa/cascade.hpp"
#include "dfa/geometry.hpp"
#include "dfa/pseudolabel.hpp"
#include "dfa/synth.hpp"
#include "dfa/trainer.hpp"

using namespace dfa;

namespace {

ad::ArchDescriptor standard_arch(std::size_t side) {
  ad::ArchDescriptor a;
  a.image_height = a.image_width = side;
  a.conv_channels = {8, 16};
  a.dense_width = 128;
  a.landmarks = synth::kLandmarkCount;
  a.clusters = 20;
  return a;
}

Tensor random_images(std::size_t n, std::size_t side, std::uint64_t seed) {
  Tensor t({n, 1, side, side});
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.values()) v = u(gen);
  return t;
}

}  // namespace

static void BM_ForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto arch = standard_arch(64);
  ad::StageNetwork net = ad::StageNetwork::initialize(arch, 1);
  const Tensor x = random_images(batch, 64, 2);
  const Tensor target({batch, 2 * arch.landmarks}, 0.1), mask({batch, 2 * arch.landmarks}, 1.0);
  const Tensor labels({batch, arch.clusters}, 0.5);
  const std::vector<int> vis(batch * arch.landmarks, 0);
  for (auto _ : state) {
    ad::Graph g;
    const auto heads = net.forward(g, x, Tensor());
    const auto loss = cascade::overall_loss(g, heads, target, mask, vis, labels, 1.0, 1.0);
    g.backward(loss.total);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_KMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 gen(3);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<std::vector<double>> pts(n, std::vector<double>(16));
  for (auto& p : pts)
    for (double& v : p) v = d(gen);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(labels::kmeans(pts, 20, seed++).objective);
}
BENCHMARK(BM_KMeans)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_GenerateSample(benchmark::State& state) {
  synth::GeneratorConfig c;
  c.image_size = static_cast<std::size_t>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synth::generate_sample(c, 7, i++).image.size());
}
BENCHMARK(BM_GenerateSample)->Arg(64)->Arg(224);

static void BM_DatasetNormalizedError(benchmark::State& state) {
  synth::GeneratorConfig c;
  c.count = 400;
  c.image_size = 32;
  const auto gts = cascade::ground_truth(synth::generate_dataset(c, 5));
  auto preds = gts;
  for (auto& p : preds)
    for (auto& q : p.coords) q.x += 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(geom::dataset_normalized_error(preds, gts).mean);
}
BENCHMARK(BM_DatasetNormalizedError);

static void BM_Inference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ad::StageNetwork net = ad::StageNetwork::initialize(standard_arch(64), 1);
  const Tensor x = random_images(n, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cascade::evaluate_all(net, x, {}).positions.size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Inference)->Arg(64)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
