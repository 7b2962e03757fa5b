#include "biphoton/correlate.hpp"

#include <algorithm>
#include <numeric>

namespace biphoton {

std::uint64_t CoincidenceHistogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

void CoincidenceHistogram::validate() const {
    if (!(bin_width > 0.0)) throw DataError("histogram: bin_width must be positive");
    if (!(tau_max > tau_min)) throw DataError("histogram: empty tau range");
    const double nominal = (tau_max - tau_min) / bin_width;
    const double rounded = std::round(nominal);
    if (std::abs(nominal - rounded) > 1e-6 || static_cast<std::size_t>(rounded) != counts.size()) {
        throw DataError("histogram: (tau_max - tau_min) / bin_width must equal the bin count");
    }
    if (!expected.empty() && expected.size() != counts.size()) {
        throw DataError("histogram: expected curve length differs from bin count");
    }
    const long double pairs = static_cast<long double>(singles_a) * static_cast<long double>(singles_b);
    if (static_cast<long double>(total()) > pairs) {
        throw DataError("histogram: more coincidences than singles pairs");
    }
    if (acquisition_time < 0.0) throw DataError("histogram: negative acquisition time");
}

bool CoincidenceHistogram::same_binning(const CoincidenceHistogram& other) const {
    const double tol = 1e-9 * bin_width;
    return counts.size() == other.counts.size() && std::abs(bin_width - other.bin_width) <= tol &&
           std::abs(tau_min - other.tau_min) <= tol && std::abs(tau_max - other.tau_max) <= tol;
}

BinGrid BinGrid::from_seconds(double bin_width, double tau_max) {
    if (!(bin_width > 0.0) || !(tau_max > 0.0)) {
        throw ConfigError("bin_width and tau_max must be positive");
    }
    BinGrid grid{to_picoseconds(bin_width), to_picoseconds(tau_max)};
    if (grid.bin_width <= 0) throw ConfigError("bin_width below 1 ps resolution");
    if (std::abs(to_seconds(grid.bin_width) - bin_width) > 1e-6 * bin_width ||
        std::abs(to_seconds(grid.tau_max) - tau_max) > 1e-6 * tau_max) {
        throw ConfigError("bin_width and tau_max must be whole picoseconds");
    }
    if (grid.tau_max % grid.bin_width != 0) {
        throw ConfigError("tau_max must be a multiple of bin_width");
    }
    return grid;
}

CoincidenceHistogram cross_correlate(const TimeTagStream& stream_a, const TimeTagStream& stream_b,
                                     double bin_width, double tau_max, const AnalyzerSetting& setting) {
    if (!stream_a.is_sorted()) throw DataError("cross_correlate: stream A is not sorted");
    if (!stream_b.is_sorted()) throw DataError("cross_correlate: stream B is not sorted");
    const BinGrid grid = BinGrid::from_seconds(bin_width, tau_max);

    CoincidenceHistogram hist;
    hist.bin_width = to_seconds(grid.bin_width);
    hist.tau_max = to_seconds(grid.tau_max);
    hist.tau_min = -hist.tau_max;
    hist.counts.assign(grid.bins(), 0);
    hist.singles_a = stream_a.size();
    hist.singles_b = stream_b.size();
    hist.setting = setting;

    if (stream_a.acquisition_time > 0.0 && stream_b.acquisition_time > 0.0) {
        hist.acquisition_time = std::min(stream_a.acquisition_time, stream_b.acquisition_time);
    } else {
        Picoseconds last = 0;
        if (!stream_a.timestamps.empty()) last = std::max(last, stream_a.timestamps.back());
        if (!stream_b.timestamps.empty()) last = std::max(last, stream_b.timestamps.back());
        hist.acquisition_time = to_seconds(last + 1);
    }

    kernels::correlate_parallel(stream_a.timestamps, stream_b.timestamps, grid, hist.counts);
    return hist;
}

double g2_scale(const CoincidenceHistogram& hist) {
    if (hist.singles_a == 0 || hist.singles_b == 0) {
        throw DataError("normalize_g2: a channel recorded no singles");
    }
    if (!(hist.acquisition_time > 0.0)) throw DataError("normalize_g2: acquisition time must be positive");
    return hist.acquisition_time /
           (static_cast<double>(hist.singles_a) * static_cast<double>(hist.singles_b) * hist.bin_width);
}

std::vector<G2Map> shared_g2_normalization(std::span<const CoincidenceHistogram> hists) {
    if (hists.empty()) return {};
    double rate_a = 0.0, rate_b = 0.0;
    bool equal_singles = true;
    for (const auto& hist : hists) {
        (void)g2_scale(hist);
        rate_a += static_cast<double>(hist.singles_a) / hist.acquisition_time;
        rate_b += static_cast<double>(hist.singles_b) / hist.acquisition_time;
        equal_singles = equal_singles && hist.singles_a == hists[0].singles_a && hist.singles_b == hists[0].singles_b &&
                        hist.acquisition_time == hists[0].acquisition_time;
    }
    const auto n = static_cast<double>(hists.size());
    rate_a /= n;
    rate_b /= n;
    std::vector<G2Map> maps;
    for (const auto& hist : hists) {
        if (equal_singles) {
            maps.push_back({g2_scale(hist), 0.0});
            continue;
        }
        const double scale = 1.0 / (rate_a * rate_b * hist.bin_width * hist.acquisition_time);
        const double accidentals =
            static_cast<double>(hist.singles_a) * static_cast<double>(hist.singles_b) * hist.bin_width / hist.acquisition_time;
        maps.push_back({scale, 1.0 - scale * accidentals});
    }
    return maps;
}

std::vector<G2Value> normalize_g2(const CoincidenceHistogram& hist) {
    const double scale = g2_scale(hist);
    std::vector<G2Value> out;
    out.reserve(hist.counts.size());
    for (auto c : hist.counts) {
        const auto n = static_cast<double>(c);
        out.push_back({n * scale, std::sqrt(n) * scale});
    }
    return out;
}

TimeTagStream apply_gate(const TimeTagStream& stream, double period, double open_fraction) {
    if (!(open_fraction > 0.0 && open_fraction <= 1.0)) {
        throw ConfigError("apply_gate: open_fraction must lie in (0, 1]");
    }
    const Picoseconds period_ps = to_picoseconds(period);
    if (period_ps <= 0) throw ConfigError("apply_gate: period must be at least 1 ps");
    const auto open_ps = static_cast<Picoseconds>(std::llround(open_fraction * static_cast<double>(period_ps)));

    TimeTagStream out;
    out.channel = stream.channel;
    out.acquisition_time = stream.acquisition_time * open_fraction;
    out.timestamps.reserve(stream.size());
    std::copy_if(stream.timestamps.begin(), stream.timestamps.end(), std::back_inserter(out.timestamps),
                 [&](Picoseconds t) { return t % period_ps < open_ps; });
    return out;
}

}  // namespace biphoton
