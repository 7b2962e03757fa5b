// Serial reference kernels against their OpenMP versions.
//   ./bench_kernels --benchmark_filter=Correlate
// Set OMP_NUM_THREADS to pin the thread count.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "biphoton/correlate.hpp"
#include "biphoton/reconstruct.hpp"

using namespace biphoton;

namespace {

std::vector<Picoseconds> poisson_stream(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(1e-6);  // 1 us mean spacing
    std::vector<Picoseconds> t(n);
    double clock = 0.0;
    for (auto& x : t) {
        clock += gap(rng);
        x = static_cast<Picoseconds>(clock);
    }
    return t;
}

const BinGrid kGrid = BinGrid::from_seconds(kDefaultBinWidth, kDefaultTauMax);

void BM_CorrelateSerial(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = poisson_stream(n, 1), b = poisson_stream(n, 2);
    std::vector<std::uint64_t> counts(kGrid.bins());
    for (auto _ : state) {
        std::fill(counts.begin(), counts.end(), 0);
        kernels::correlate_serial(a, b, kGrid, counts);
        benchmark::DoNotOptimize(counts.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n));
}

void BM_CorrelateParallel(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = poisson_stream(n, 1), b = poisson_stream(n, 2);
    std::vector<std::uint64_t> counts(kGrid.bins());
    for (auto _ : state) {
        std::fill(counts.begin(), counts.end(), 0);
        kernels::correlate_parallel(a, b, kGrid, counts);
        benchmark::DoNotOptimize(counts.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n));
}

struct BinBatch {
    std::vector<ReconstructedBin> bins;
    std::vector<std::array<double, 3>> sigma;
    std::vector<std::array<std::uint64_t, 3>> counts;
};

BinBatch bin_batch(std::size_t n) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    BinBatch batch;
    batch.bins.resize(n);
    for (auto& b : batch.bins) b.y = {u(rng), u(rng), u(rng)};
    batch.sigma.assign(n, {0.01, 0.01, 0.01});
    batch.counts.assign(n, {10000, 10000, 10000});
    return batch;
}

template <auto Kernel>
void BM_ReconstructBins(benchmark::State& state) {
    const auto batch = bin_batch(static_cast<std::size_t>(state.range(0)));
    auto bins = batch.bins;
    for (auto _ : state) {
        Kernel(bins, batch.sigma, batch.counts, RootChoice::larger);
        benchmark::DoNotOptimize(bins.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_CorrelateSerial)->Arg(1 << 20)->Arg(1 << 23)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorrelateParallel)->Arg(1 << 20)->Arg(1 << 23)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReconstructBins<kernels::reconstruct_bins_serial>)->Arg(100)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ReconstructBins<kernels::reconstruct_bins_parallel>)->Arg(100)->Arg(100000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
