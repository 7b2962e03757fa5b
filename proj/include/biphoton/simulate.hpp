#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "biphoton/correlate.hpp"
#include "biphoton/model.hpp"
#include "biphoton/timetag.hpp"

namespace biphoton {

using Rng = std::mt19937_64;

/// Periodic detector gate: tags are kept while (t mod period) < open_fraction * period.
struct GateMask {
    double period = 0.0;
    double open_fraction = 1.0;
};

/// Monte Carlo acquisition parameters. Rates in 1/s, times in seconds.
struct SimConfig {
    double pair_rate = 0.0;
    double singles_rate_a = 0.0;
    double singles_rate_b = 0.0;
    double duration = 1.0;
    double jitter_sigma = 0.0;
    double dead_time = 0.0;
    /// Pair delays are drawn on [-tau_window, tau_window].
    double tau_window = 400e-9;
    std::uint64_t seed = 0;
    std::optional<GateMask> gate;
    /// Upper bound on the expected number of generated tags.
    double max_tags = 2e8;

    /// Throws ConfigError. The window must cover at least ten correlation
    /// times of `model` so the truncated tail mass stays below 1e-8.
    void validate(const TpwfModel& model) const;

    /// Upper bound on the expected tag count over both channels. Interference
    /// can at most double the pair rate of a setting.
    double expected_tags() const { return (4.0 * pair_rate + singles_rate_a + singles_rate_b) * duration; }
};

/// Deterministic per-setting seed: splitmix64 of (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Exact integral over [lo, hi] of the pair-delay density
/// y(tau) = sin^2(2 theta) |gamma e^{-2i phi} - psi(tau)|^2.
double pair_delay_mass(const AnalyzerSetting& setting, const TpwfModel& model, ReferenceAmplitude gamma,
                       double lo, double hi);

/// Pair rate reaching the detectors at `setting`. `config.pair_rate` is the
/// rate at theta = pi/4 averaged over the analyzer phase; each setting scales
/// it by its share of the interference pattern, so all settings share one
/// brightness and the three-phase inversion sees a common scale.
double setting_pair_rate(const SimConfig& config, const AnalyzerSetting& setting, const TpwfModel& model,
                         ReferenceAmplitude gamma);

/// Inverse-CDF sampler for the pair delay tau = t_A - t_B on [-window, window].
/// The CDF is tabulated exactly at kGridPoints nodes and interpolated
/// linearly in between.
class PairDelaySampler {
  public:
    static constexpr std::size_t kGridPoints = 8193;

    /// Throws NumericalError when the density integrates to zero.
    PairDelaySampler(const AnalyzerSetting& setting, const TpwfModel& model, ReferenceAmplitude gamma,
                     double window);

    double operator()(Rng& rng) const;

    double window() const { return window_; }
    /// Tabulated CDF at node i (0 at -window, 1 at +window).
    double cdf_at(std::size_t i) const { return cdf_[i]; }
    double node(std::size_t i) const;

  private:
    double window_;
    std::vector<double> cdf_;
};

/// One draw of the pair delay. Builds the CDF table on every call; use
/// PairDelaySampler when drawing repeatedly.
double sample_pair_delay(Rng& rng, const AnalyzerSetting& setting, const TpwfModel& model,
                         ReferenceAmplitude gamma, double window);

/// Event-level acquisition for one analyzer setting. Pairs arrive as a
/// Poisson process with a uniform midpoint t, clicking A at t + tau/2 and B
/// at t - tau/2; singles are independent Poisson processes per channel.
/// Jitter is applied first, then non-paralyzable dead time, then the gate.
/// The RNG is seeded from derive_seed(config.seed, stream_index).
StreamPair generate_stream(const SimConfig& config, const AnalyzerSetting& setting, const TpwfModel& model,
                           ReferenceAmplitude gamma, std::uint64_t stream_index = 0);

/// Expected coincidence counts per bin for the event-level process with no
/// jitter or dead time: pair term plus the flat accidental level
/// (r_A + r_pair)(r_B + r_pair) * bin_width * T, with r_pair from
/// setting_pair_rate.
std::vector<double> expected_histogram(const SimConfig& config, const AnalyzerSetting& setting,
                                       const TpwfModel& model, ReferenceAmplitude gamma, double bin_width,
                                       double tau_max);

/// Poisson-sampled histogram around expected_histogram. The analytic mean
/// is kept in `expected`; singles totals are the expected click counts.
CoincidenceHistogram rate_level_histogram(const SimConfig& config, const AnalyzerSetting& setting,
                                          const TpwfModel& model, ReferenceAmplitude gamma,
                                          double bin_width = kDefaultBinWidth,
                                          double tau_max = kDefaultTauMax, std::uint64_t stream_index = 0);

}  // namespace biphoton
