#include <benchmark/benchmark.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "cloudharm/assess.hpp"
#include "cloudharm/fixtures.hpp"
#include "cloudharm/psv.hpp"
#include "cloudharm/store.hpp"

using namespace cloudharm;

namespace {

// Layered graph: `width` hosts per tier, full bipartite edges between tiers.
Harm layered(int tiers, int width, int vulns) {
  Harm m;
  m.model_id = "bench";
  m.created_at = "2026-01-01T00:00:00.000000Z";
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> p(0.1, 0.9), r(0.5, 9.5);
  auto id = [](int t, int w) { return HostId{"t" + std::to_string(t) + "h" + std::to_string(w)}; };
  for (int t = 0; t < tiers; ++t) {
    for (int w = 0; w < width; ++w) {
      const auto h = id(t, w);
      m.upper.nodes.insert(h);
      for (int v = 0; v < vulns; ++v) {
        VulnerabilityRecord rec;
        rec.vuln_id = "v" + std::to_string(v) + h.value;
        rec.cve_id = "CVE-2020-0001";
        rec.probability = p(rng);
        rec.risk = r(rng);
        m.lower[h].push_back(rec);
      }
      if (t == 0) m.upper.add_edge(kAttacker, h, PortSpec{});
      if (t > 0)
        for (int u = 0; u < width; ++u) m.upper.add_edge(id(t - 1, u), h, PortSpec{});
    }
  }
  for (int w = 0; w < width; ++w) m.targets.insert(id(tiers - 1, w));
  canonicalize(m);
  return m;
}

void BM_EnumeratePaths(benchmark::State& state) {
  const auto m = layered(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 2);
  std::size_t paths = 0;
  for (auto _ : state) {
    auto p = enumerate_attack_paths(m);
    paths = p.size();
    benchmark::DoNotOptimize(p);
  }
  state.counters["paths"] = static_cast<double>(paths);
}
BENCHMARK(BM_EnumeratePaths)->Args({3, 3})->Args({4, 4})->Args({5, 5})->Args({6, 6});

void BM_ComputeMetrics(benchmark::State& state) {
  const auto m = layered(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(compute_metrics(m));
}
BENCHMARK(BM_ComputeMetrics)->Args({3, 3})->Args({5, 5});

void BM_MetricsTestbed1(benchmark::State& state) {
  const auto m = fixtures::build("testbed1");
  for (auto _ : state) benchmark::DoNotOptimize(compute_metrics(m));
}
BENCHMARK(BM_MetricsTestbed1);

void BM_PsvTestbed(benchmark::State& state) {
  const auto m = fixtures::build(state.range(0) == 1 ? "testbed1" : "testbed2");
  for (auto _ : state) benchmark::DoNotOptimize(rank_psv_es(m, 5));
}
BENCHMARK(BM_PsvTestbed)->Arg(1)->Arg(2);

void BM_PsvLayered(benchmark::State& state) {
  const auto m = layered(3, static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(rank_psv_es(m, 3));
}
BENCHMARK(BM_PsvLayered)->Arg(2)->Arg(3)->Arg(4);

void BM_StorePut(benchmark::State& state) {
  std::string tmpl = (std::filesystem::temp_directory_path() / "cloudharm-bench-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) {
    state.SkipWithError("mkdtemp failed");
    return;
  }
  {
    Store store(tmpl);
    const auto doc = harm_to_json(fixtures::build("testbed1"));
    int i = 0;
    for (auto _ : state) store.put(Collection::harm_objects, "k" + std::to_string(i++ % 16), doc);
  }
  std::filesystem::remove_all(tmpl);
}
BENCHMARK(BM_StorePut)->Unit(benchmark::kMicrosecond);

void BM_FixtureInstall(benchmark::State& state) {
  for (auto _ : state) {
    state.PauseTiming();
    std::string tmpl = (std::filesystem::temp_directory_path() / "cloudharm-bench-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) {
      state.SkipWithError("mkdtemp failed");
      return;
    }
    state.ResumeTiming();
    {
      Store store(tmpl);
      benchmark::DoNotOptimize(fixtures::install(store, "testbed1"));
    }
    state.PauseTiming();
    std::filesystem::remove_all(tmpl);
    state.ResumeTiming();
  }
}
BENCHMARK(BM_FixtureInstall)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
