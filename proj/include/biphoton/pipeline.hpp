#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "biphoton/fit.hpp"
#include "biphoton/io.hpp"
#include "biphoton/simulate.hpp"

namespace biphoton {

/// Everything a run needs. JSON keys carry their unit as a suffix; flags
/// override file values, which override these defaults.
struct PipelineConfig {
    // Biphoton model; the default decay time matches an 8.1 MHz cavity line.
    double amplitude = 1.0;
    double corr_time_ns = 1e9 / (kPi * 8.1e6);
    double tau_offset_ns = 0.0;
    double phase_rad = 0.9;
    double gamma = 1.0;
    double theta_rad = kPi / 4.0;

    // Acquisition.
    double pair_rate_hz = 500.0;
    double singles_rate_a_hz = 5000.0;
    double singles_rate_b_hz = 5000.0;
    double duration_s = 60.0;
    double jitter_ns = 0.0;
    double dead_time_ns = 0.0;
    double tau_window_ns = 400.0;
    double max_tags = 2e8;
    double gate_period_us = 0.0;  ///< 0 disables gating
    double gate_open_fraction = 1.0;
    std::uint64_t seed = 20140613;

    // Analysis.
    double bin_width_ns = 4.0;
    double tau_max_ns = 200.0;
    std::string background_mode = "none";
    std::string gamma_mode = "pooled";
    double wing_fraction = 0.2;
    std::string root = "larger";
    std::optional<double> fix_corr_time_ns;
    double phase_threshold = 0.1;

    std::string output_dir = "run";

    TpwfModel model() const;
    ReferenceAmplitude reference() const { return {gamma}; }
    SimConfig sim() const;
    ReconstructionOptions reconstruction_options() const;
    double bin_width() const { return bin_width_ns * 1e-9; }
    double tau_max() const { return tau_max_ns * 1e-9; }
    std::optional<double> fix_corr_time() const;

    /// Validates every module invariant; throws ConfigError.
    void validate() const;

    Json to_json() const;
    /// Overlays the keys present in `j` onto `base`. Unknown keys and wrong
    /// types raise ConfigError.
    static PipelineConfig from_json(const Json& j, PipelineConfig base);
    static PipelineConfig from_json(const Json& j);
    static PipelineConfig load(const std::filesystem::path& path);
};

/// Analyzer setting k of the three-phase protocol.
AnalyzerSetting tomography_setting(const PipelineConfig& config, std::size_t k);

struct SimulatedRun {
    std::filesystem::path manifest;
    std::array<std::filesystem::path, 3> files_a;
    std::array<std::filesystem::path, 3> files_b;
};

/// Generates the three settings concurrently and writes
/// <dir>/tags/phi{k}_{A,B}.bttg plus <dir>/manifest.json.
SimulatedRun cmd_simulate(const PipelineConfig& config, const std::filesystem::path& dir);

/// Correlates one pair of time-tag files. When `acquisition_time` is absent
/// the span of the recorded timestamps is used. The returned document
/// carries a "provenance" block.
Json cmd_correlate(const std::vector<std::filesystem::path>& inputs, const AnalyzerSetting& setting,
                   double bin_width, double tau_max, std::optional<double> acquisition_time);

/// Correlates all three settings listed in a simulation manifest, writing
/// <dir>/histogram_phi{k}.json. Returns the written paths.
std::array<std::filesystem::path, 3> cmd_correlate_run(const std::filesystem::path& manifest,
                                                       const std::filesystem::path& dir, double bin_width,
                                                       double tau_max);

Json cmd_reconstruct(const std::array<std::filesystem::path, 3>& histograms, const ReconstructionOptions& options);

/// Double-exponential and constant-phase fits of a reconstruction document.
Json cmd_fit(const Json& reconstruction, std::optional<double> fix_corr_time, double phase_threshold);

/// simulate -> correlate -> reconstruct -> fit into config.output_dir.
/// Returns the fit document.
Json cmd_pipeline(const PipelineConfig& config);

/// Analyzer scan at phi = k pi / n_settings: g2 at tau = 0 (mean of the two
/// bins adjacent to zero delay) per setting and the A + B cos 2phi fit.
Json cmd_visibility(const PipelineConfig& config, std::size_t n_settings);

/// g2 and sigma at zero delay from the two bins adjacent to tau = 0.
G2Value zero_delay_g2(const CoincidenceHistogram& hist);
/// Same, with a shared normalization from shared_g2_normalization.
G2Value zero_delay_g2(const CoincidenceHistogram& hist, const G2Map& map);

}  // namespace biphoton
