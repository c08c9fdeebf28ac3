#include <benchmark/benchmark.h>

#include "headfuse/codec.hpp"
#include "headfuse/heads.hpp"
#include "headfuse/random.hpp"
#include "headfuse/wire.hpp"

using namespace headfuse;

namespace {

HeadMessage message(QuantMode mode) {
  const AnchorGrid anchors = default_anchor_grid();
  const int n = anchors.grid.height();
  Rng rng(1);
  HeadMaps maps{GridMap(2, n, n), GridMap(14, n, n)};
  for (double& v : maps.cls.values()) v = rng.uniform() < 0.05 ? rng.uniform() : 0.0;
  for (double& v : maps.reg.values()) v = rng.uniform(-0.5, 0.5);
  return make_head_message(1, 0, Pose2D{}, anchors, maps, mode);
}

void BM_Serialize(benchmark::State& state) {
  const HeadMessage msg = message(static_cast<QuantMode>(state.range(0)));
  std::size_t bytes = 0;
  for (auto _ : state) {
    const Bytes b = serialize(msg);
    bytes = b.size();
    benchmark::DoNotOptimize(b.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_Serialize)->Arg(0)->Arg(1);

void BM_Deserialize(benchmark::State& state) {
  const Bytes b = serialize(message(static_cast<QuantMode>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(deserialize_head(b));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(b.size()));
}
BENCHMARK(BM_Deserialize)->Arg(0)->Arg(1);

void BM_DeflateRoundTrip(benchmark::State& state) {
  const Bytes b = serialize(message(QuantMode::kFloat32));
  const DeflateCodec codec;
  for (auto _ : state) benchmark::DoNotOptimize(codec.decompress(codec.compress(b)));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(b.size()));
  state.counters["ratio"] = static_cast<double>(codec.compress(b).size()) / static_cast<double>(b.size());
}
BENCHMARK(BM_DeflateRoundTrip);

}  // namespace

BENCHMARK_MAIN();
