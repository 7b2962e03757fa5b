#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biphoton/model.hpp"
#include "biphoton/timetag.hpp"

namespace biphoton {

inline constexpr double kDefaultBinWidth = 4e-9;
inline constexpr double kDefaultTauMax = 200e-9;

/// Coincidence counts versus tau = t_A - t_B on the half-open bins
/// [tau_min + k*bin_width, tau_min + (k+1)*bin_width), tau_min = -tau_max.
struct CoincidenceHistogram {
    double bin_width = kDefaultBinWidth;
    double tau_min = -kDefaultTauMax;
    double tau_max = kDefaultTauMax;
    std::vector<std::uint64_t> counts;
    double acquisition_time = 0.0;
    std::uint64_t singles_a = 0;
    std::uint64_t singles_b = 0;
    AnalyzerSetting setting;
    /// Analytic mean counts per bin when the histogram came from a model
    /// (rate-level simulation); empty for measured data.
    std::vector<double> expected;

    std::size_t size() const { return counts.size(); }
    double bin_center(std::size_t k) const { return tau_min + (static_cast<double>(k) + 0.5) * bin_width; }
    std::uint64_t total() const;

    /// Checks the binning arithmetic and count bounds; throws DataError.
    void validate() const;

    /// Same binning (width, range, bin count).
    bool same_binning(const CoincidenceHistogram& other) const;
};

/// Bin geometry in integer picoseconds. Throws ConfigError unless
/// bin_width > 0 and tau_max is a positive multiple of bin_width.
struct BinGrid {
    Picoseconds bin_width = 0;
    Picoseconds tau_max = 0;

    static BinGrid from_seconds(double bin_width, double tau_max);
    std::size_t bins() const { return static_cast<std::size_t>(2 * tau_max / bin_width); }
};

namespace kernels {

/// Single-threaded two-pointer sliding window. Adds the count of every pair
/// with t_A - t_B in [-tau_max, tau_max) into `counts` (size grid.bins()).
/// Inputs must be sorted.
void correlate_serial(std::span<const Picoseconds> a, std::span<const Picoseconds> b, BinGrid grid,
                      std::span<std::uint64_t> counts);

/// OpenMP version: stream A is split into contiguous shards, each shard
/// locates its B window by binary search and fills a private histogram; the
/// shard histograms are summed. Identical result to correlate_serial.
/// Shards hold at least `min_shard` A tags.
void correlate_parallel(std::span<const Picoseconds> a, std::span<const Picoseconds> b, BinGrid grid,
                        std::span<std::uint64_t> counts, std::size_t min_shard = 1 << 16);

}  // namespace kernels

/// Cross-correlation histogram of two sorted streams. Throws DataError when
/// either stream is unsorted.
CoincidenceHistogram cross_correlate(const TimeTagStream& stream_a, const TimeTagStream& stream_b,
                                     double bin_width = kDefaultBinWidth,
                                     double tau_max = kDefaultTauMax,
                                     const AnalyzerSetting& setting = {});

struct G2Value {
    double g2 = 0.0;
    double sigma = 0.0;
};

/// Factor converting raw counts into g2: T / (N_A * N_B * bin_width).
double g2_scale(const CoincidenceHistogram& hist);

/// Affine counts-to-g2 map shared by a set of histograms taken at different
/// analyzer settings.
struct G2Map {
    double scale = 0.0;
    double offset = 0.0;
    double operator()(double counts) const { return offset == 0.0 ? counts * scale : counts * scale + offset; }
};

/// Pair clicks make the singles depend on the analyzer setting, so
/// normalizing each histogram by its own singles rescales the settings
/// relative to each other. Here every histogram is scaled by the mean singles
/// rates, scale_k = 1 / (rbar_A rbar_B dt T_k), and shifted by
/// offset_k = 1 - scale_k N_A,k N_B,k dt / T_k so all carry the same
/// accidental level 1. With equal singles this reduces to g2_scale and a zero
/// offset. Throws DataError like g2_scale.
std::vector<G2Map> shared_g2_normalization(std::span<const CoincidenceHistogram> hists);

/// g2[k] = counts[k] * T / (N_A N_B dt), sigma = sqrt(counts[k]) times the
/// same factor. Throws DataError for empty singles or zero acquisition time.
std::vector<G2Value> normalize_g2(const CoincidenceHistogram& hist);

/// Keeps tags with (timestamp mod period) < open_fraction * period and
/// scales acquisition_time by open_fraction.
TimeTagStream apply_gate(const TimeTagStream& stream, double period, double open_fraction);

}  // namespace biphoton
