// Timing for the per-iteration hot path: building the per-sample agent
// graph and extracting its maximum spanning tree.

#include <benchmark/benchmark.h>

#include <vector>

#include "lgrad/graph.hpp"
#include "lgrad/rng.hpp"

namespace {

std::vector<std::vector<double>> random_predictions(int n, int d,
                                                    std::uint64_t seed) {
    lgrad::Rng rng(seed);
    std::vector<std::vector<double>> preds(n, std::vector<double>(d));
    for (auto& row : preds) {
        for (double& v : row) v = rng.uniform();
    }
    return preds;
}

void BM_BuildPerSampleGraph(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto preds = random_predictions(n, 64, 17);
    for (auto _ : state) {
        benchmark::DoNotOptimize(lgrad::build_per_sample_graph(preds, 0.25));
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_BuildPerSampleGraph)->RangeMultiplier(2)->Range(2, 16)->Complexity();

void BM_MaximumSpanningTree(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto preds = random_predictions(n, 64, 17);
    const lgrad::ModelGraph g = lgrad::build_per_sample_graph(preds, 0.25);
    for (auto _ : state) {
        benchmark::DoNotOptimize(lgrad::maximum_spanning_tree(g));
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_MaximumSpanningTree)->RangeMultiplier(2)->Range(2, 16)->Complexity();

void BM_GraphPlusTree(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto preds = random_predictions(n, 64, 17);
    for (auto _ : state) {
        const lgrad::ModelGraph g = lgrad::build_per_sample_graph(preds, 0.25);
        benchmark::DoNotOptimize(lgrad::maximum_spanning_tree(g));
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_GraphPlusTree)->RangeMultiplier(2)->Range(2, 16)->Complexity();

}  // namespace

BENCHMARK_MAIN();
