// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernels. Sizes follow a 1k-instance study on the
// 16x16-merged grid with raw payloads.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ctxprobe/kernels.hpp"

using namespace ctxprobe;

namespace {

constexpr std::size_t kLayers = 32;
constexpr std::size_t kPatches = 24;
constexpr std::size_t kDim = 64;

struct CosineData {
    std::vector<float> storage;
    std::vector<kernels::CosinePair> pairs;
};

CosineData cosine_data(std::size_t n) {
    CosineData d;
    const std::size_t per = kLayers * kPatches * kDim;
    d.storage.resize(2 * n * per);
    std::mt19937 gen(1);
    std::normal_distribution<float> nd;
    for (auto &v : d.storage) v = nd(gen);
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const float> all(d.storage);
        d.pairs.push_back({all.subspan(2 * i * per, per), all.subspan((2 * i + 1) * per, per), kPatches});
    }
    return d;
}

template <auto Kernel>
void BM_Cosines(benchmark::State &state) {
    const auto d = cosine_data(static_cast<std::size_t>(state.range(0)));
    std::vector<double> out(d.pairs.size() * kLayers);
    std::vector<std::size_t> skipped(d.pairs.size());
    for (auto _ : state) {
        Kernel(d.pairs, kLayers, kDim, out, skipped);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void BM_Permutations(benchmark::State &state) {
    std::vector<double> pooled(static_cast<std::size_t>(state.range(0)));
    std::mt19937 gen(2);
    std::normal_distribution<double> nd;
    for (auto &v : pooled) v = nd(gen);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Kernel(pooled, pooled.size() / 3, 0.1, 1000, 42));
    }
}

template <auto Kernel>
void BM_CoveredCells(benchmark::State &state) {
    BinaryMask m(448, 448);
    m.fill_rect(40, 60, 300, 410);
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(m, 16, 16, 28));
}

} // namespace

BENCHMARK_TEMPLATE(BM_Cosines, kernels::serial::mean_patch_cosines)->Arg(64)->Arg(512);
BENCHMARK_TEMPLATE(BM_Cosines, kernels::omp::mean_patch_cosines)->Arg(64)->Arg(512);
BENCHMARK_TEMPLATE(BM_Permutations, kernels::serial::permutation_exceedances)->Arg(300)->Arg(1700);
BENCHMARK_TEMPLATE(BM_Permutations, kernels::omp::permutation_exceedances)->Arg(300)->Arg(1700);
BENCHMARK_TEMPLATE(BM_CoveredCells, kernels::serial::fully_covered_cells);
BENCHMARK_TEMPLATE(BM_CoveredCells, kernels::omp::fully_covered_cells);

BENCHMARK_MAIN();
