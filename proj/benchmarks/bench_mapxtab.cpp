#include <benchmark/benchmark.h>

#include <filesystem>
#include <vector>

#include "mapxtab/crosstab.hpp"
#include "mapxtab/metrics.hpp"
#include "mapxtab/synth.hpp"

using namespace mapxtab;

namespace {

std::filesystem::path dataFile(const char* relative) {
  return std::filesystem::path(MAPXTAB_DATA_DIR) / relative;
}

LegendPtr siam() {
  static const auto legend = loadLegend(dataFile("legends/siam19.csv"));
  return legend;
}
LegendPtr nlcd() {
  static const auto legend = loadLegend(dataFile("legends/nlcd16.csv"));
  return legend;
}

void BM_Tally(benchmark::State& state) {
  const auto n = static_cast<std::uint32_t>(state.range(0));
  const auto test = generateTruth(n, 1, siam(), 1).readAll();
  const auto reference = generateTruth(n, 1, nlcd(), 2).readAll();
  TallyAccumulator acc(TallyLayout{siam(), nlcd(), nullptr, 0, 0, 0});
  for (auto _ : state) {
    acc.tally(test, reference, {});
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Tally)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);

// Streams an on-disk pair; args are edge length, tile edge and worker count.
void BM_CrosstabStreamed(benchmark::State& state) {
  const auto edge = static_cast<std::uint32_t>(state.range(0));
  const auto dir = std::filesystem::temp_directory_path() / "mapxtab_bench";
  std::filesystem::create_directories(dir);
  const auto t = dir / ("test" + std::to_string(edge) + ".cmap");
  const auto r = dir / ("ref" + std::to_string(edge) + ".cmap");
  if (!std::filesystem::exists(t)) writeUniformRaster(t, edge, edge, siam(), 1);
  if (!std::filesystem::exists(r)) writeUniformRaster(r, edge, edge, nlcd(), 2);
  const auto test = openRaster(t, siam());
  const auto reference = openRaster(r, nlcd());
  const auto tile = static_cast<std::uint32_t>(state.range(1));
  const StreamOptions options{tile, tile, static_cast<unsigned>(state.range(2))};
  for (auto _ : state) benchmark::DoNotOptimize(crosstabStreamed(test, reference, nullptr, options));
  state.SetItemsProcessed(state.iterations() * std::int64_t{edge} * edge);
}
BENCHMARK(BM_CrosstabStreamed)
    ->Args({1000, 256, 1})
    ->Args({1000, 1024, 1})
    ->Args({2000, 1024, 1})
    ->Args({2000, 1024, 4})
    ->UseRealTime()
    ->Unit(benchmark::kMillisecond);

void BM_Apportion(benchmark::State& state) {
  std::vector<double> weights(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = 1.0 + static_cast<double>(i % 97);
  for (auto _ : state) benchmark::DoNotOptimize(apportion(weights, 1'000'000));
}
BENCHMARK(BM_Apportion)->Arg(16)->Arg(304)->Arg(4096);

void BM_TopK(benchmark::State& state) {
  const auto ct = readCrossTabCsv(dataFile("fixtures/siam19_nlcd16_conus2006.counts.csv"), siam(), nlcd());
  for (auto _ : state) benchmark::DoNotOptimize(topKMatches(conditionalGivenTest(ct), 5));
}
BENCHMARK(BM_TopK);

}  // namespace

BENCHMARK_MAIN();
