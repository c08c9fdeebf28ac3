#include <benchmark/benchmark.h>

#include "headfuse/fusion.hpp"
#include "headfuse/heads.hpp"
#include "headfuse/random.hpp"

using namespace headfuse;

namespace {

GridMap random_map(std::uint64_t seed, int c, int n) {
  Rng rng(seed);
  GridMap m(c, n, n);
  for (double& v : m.values()) v = rng.uniform();
  return m;
}

void BM_ClsMax(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridMap a = random_map(1, 2, n), b = random_map(2, 2, n);
  for (auto _ : state) benchmark::DoNotOptimize(fuse_cls_max(a, b));
  state.SetItemsProcessed(state.iterations() * a.size());
}
BENCHMARK(BM_ClsMax)->Arg(80)->Arg(200);

void BM_RegMean(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridMap a = random_map(1, 14, n), b = random_map(2, 14, n);
  for (auto _ : state) benchmark::DoNotOptimize(fuse_reg_mean(a, b));
  state.SetItemsProcessed(state.iterations() * a.size());
}
BENCHMARK(BM_RegMean)->Arg(80)->Arg(200);

void BM_ClsAttention(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::vector<GridMap> maps{random_map(1, 2, n), random_map(2, 2, n)};
  for (auto _ : state) benchmark::DoNotOptimize(fuse_cls_attention(maps, 0));
}
BENCHMARK(BM_ClsAttention)->Arg(80);

void BM_Complementary(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridMap a = random_map(1, 14, n), b = random_map(2, 14, n);
  const ComplementaryParams p = ComplementaryParams::initialize(14, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fuse_reg_complementary(a, b, p));
}
BENCHMARK(BM_Complementary)->Arg(80);

void BM_ComplementaryBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridMap a = random_map(1, 14, n), b = random_map(2, 14, n), gt = random_map(3, 14, n);
  const ComplementaryParams p = ComplementaryParams::initialize(14, 3);
  for (auto _ : state) {
    Tape tape;
    const ComplementaryGraph g = record_complementary(tape, a, b, p);
    const std::vector<std::uint8_t> mask(gt.size(), 1);
    tape.backward(tape.smooth_l1(g.fused, gt, mask));
    benchmark::DoNotOptimize(tape.grad(p.conv_out));
  }
}
BENCHMARK(BM_ComplementaryBackward)->Arg(80);

void BM_Conv3x3(benchmark::State& state) {
  const GridMap x = random_map(4, 1, 80);
  ConvParams p(3, 1, 1);
  p.weight.assign(9, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
}
BENCHMARK(BM_Conv3x3);

void BM_Decode(benchmark::State& state) {
  const AnchorGrid anchors = default_anchor_grid();
  Rng rng(5);
  std::vector<Box3D> boxes;
  for (int i = 0; i < 20; ++i) boxes.push_back({rng.uniform(-38, 38), rng.uniform(-38, 38), -1, 4, 1.8, 1.5, 0, 1});
  const HeadMaps m = encode_gt(boxes, anchors).maps;
  for (auto _ : state) benchmark::DoNotOptimize(decode(m.cls, m.reg, anchors, 0.25, 0.15));
}
BENCHMARK(BM_Decode);

}  // namespace

BENCHMARK_MAIN();
