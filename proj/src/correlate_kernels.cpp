#include <algorithm>
#include <vector>

#include <omp.h>

#include "biphoton/correlate.hpp"

namespace biphoton::kernels {

namespace {

// Counts pairs for a[first, last). `lo` must point at the first B tag that can
// pair with a[first], i.e. the first b > a[first] - tau_max.
void correlate_range(std::span<const Picoseconds> a, std::size_t first, std::size_t last,
                     std::span<const Picoseconds> b, std::size_t lo, BinGrid grid,
                     std::uint64_t* counts) {
    const std::size_t nb = b.size();
    for (std::size_t i = first; i < last; ++i) {
        const Picoseconds t = a[i];
        // tau = t - b in [-tau_max, tau_max)  <=>  b in (t - tau_max, t + tau_max]
        while (lo < nb && b[lo] <= t - grid.tau_max) ++lo;
        for (std::size_t j = lo; j < nb && b[j] <= t + grid.tau_max; ++j) {
            const Picoseconds shifted = t - b[j] + grid.tau_max;
            ++counts[shifted / grid.bin_width];
        }
    }
}

std::size_t window_start(std::span<const Picoseconds> b, Picoseconds t, Picoseconds tau_max) {
    return static_cast<std::size_t>(std::upper_bound(b.begin(), b.end(), t - tau_max) - b.begin());
}

}  // namespace

void correlate_serial(std::span<const Picoseconds> a, std::span<const Picoseconds> b, BinGrid grid,
                      std::span<std::uint64_t> counts) {
    correlate_range(a, 0, a.size(), b, 0, grid, counts.data());
}

void correlate_parallel(std::span<const Picoseconds> a, std::span<const Picoseconds> b, BinGrid grid,
                        std::span<std::uint64_t> counts, std::size_t min_shard) {
    const std::size_t bins = grid.bins();
    const int max_threads = omp_get_max_threads();
    const auto shards = static_cast<int>(std::clamp<std::size_t>(
        a.size() / std::max<std::size_t>(min_shard, 1), 1, static_cast<std::size_t>(max_threads)));
    if (shards == 1) {
        correlate_serial(a, b, grid, counts);
        return;
    }

    std::vector<std::uint64_t> local(static_cast<std::size_t>(shards) * bins, 0);
#pragma omp parallel for num_threads(shards) schedule(static, 1)
    for (int s = 0; s < shards; ++s) {
        const std::size_t first = a.size() * static_cast<std::size_t>(s) / shards;
        const std::size_t last = a.size() * static_cast<std::size_t>(s + 1) / shards;
        if (first == last) continue;
        const std::size_t lo = window_start(b, a[first], grid.tau_max);
        correlate_range(a, first, last, b, lo, grid, local.data() + static_cast<std::size_t>(s) * bins);
    }
    for (int s = 0; s < shards; ++s) {
        const auto* part = local.data() + static_cast<std::size_t>(s) * bins;
        for (std::size_t k = 0; k < bins; ++k) counts[k] += part[k];
    }
}

}  // namespace biphoton::kernels
