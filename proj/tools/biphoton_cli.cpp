// biphoton: simulate -> correlate -> reconstruct -> fit from the command line.
//
// Exit codes: 0 ok, 1 usage/configuration, 2 data error, 3 numerical failure.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biphoton/pipeline.hpp"

namespace fs = std::filesystem;
using namespace biphoton;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Long-form flags that overlay PipelineConfig keys.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::optional<double>> numbers;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> background_mode, gamma_mode, root, output_dir;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        static const std::vector<std::pair<std::string, std::string>> kNumeric = {
            {"amplitude", "amplitude"},           {"corr-time-ns", "corr_time_ns"},
            {"tau-offset-ns", "tau_offset_ns"},   {"phase-rad", "phase_rad"},
            {"gamma", "gamma"},                   {"theta-rad", "theta_rad"},
            {"pair-rate-hz", "pair_rate_hz"},     {"singles-rate-a-hz", "singles_rate_a_hz"},
            {"singles-rate-b-hz", "singles_rate_b_hz"}, {"duration-s", "duration_s"},
            {"jitter-ns", "jitter_ns"},           {"dead-time-ns", "dead_time_ns"},
            {"tau-window-ns", "tau_window_ns"},   {"max-tags", "max_tags"},
            {"gate-period-us", "gate_period_us"}, {"gate-open-fraction", "gate_open_fraction"},
            {"bin-width-ns", "bin_width_ns"},     {"tau-max-ns", "tau_max_ns"},
            {"wing-fraction", "wing_fraction"},   {"fix-corr-time-ns", "fix_corr_time_ns"},
            {"phase-threshold", "phase_threshold"},
        };
        for (const auto& [flag, key] : kNumeric) {
            app->add_option("--" + flag, numbers[key], "overrides config key " + key);
        }
        app->add_option("--seed", seed, "RNG seed");
        app->add_option("--background-mode", background_mode, "none | wing_subtract");
        app->add_option("--gamma-mode", gamma_mode, "per_bin | pooled");
        app->add_option("--root", root, "larger | smaller");
        app->add_option("--output-dir", output_dir, "run directory");
    }

    PipelineConfig resolve() const {
        PipelineConfig config = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
        Json overrides = Json::object();
        for (const auto& [key, value] : numbers) {
            if (value) overrides[key] = *value;
        }
        if (seed) overrides["seed"] = *seed;
        if (background_mode) overrides["background_mode"] = *background_mode;
        if (gamma_mode) overrides["gamma_mode"] = *gamma_mode;
        if (root) overrides["root"] = *root;
        if (output_dir) overrides["output_dir"] = *output_dir;
        config = PipelineConfig::from_json(overrides, config);
        config.validate();
        return config;
    }
};

void emit(const Json& doc, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << doc.dump(2) << "\n";
    } else {
        write_json(out, doc);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Biphoton wave-function measurement: simulation, correlation, reconstruction, fitting"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "generate time-tag files for phi = 0, pi/3, 2pi/3");
    ConfigFlags simulate_flags;
    simulate_flags.attach(simulate);

    // correlate
    auto* correlate = app.add_subcommand("correlate", "cross-correlate time-tag files into histogram JSON");
    std::vector<std::string> correlate_inputs;
    std::string correlate_manifest, correlate_out, correlate_dir;
    std::optional<int> phi_setting;
    std::optional<double> phi_rad, acquisition_time;
    double theta_rad = kPi / 4.0, bin_width_ns = 4.0, tau_max_ns = 200.0;
    correlate->add_option("--input", correlate_inputs, "time-tag files (channel A and B)")->check(CLI::ExistingFile);
    correlate->add_option("--manifest", correlate_manifest, "simulation manifest: correlate all three settings")
        ->check(CLI::ExistingFile);
    correlate->add_option("--output-dir", correlate_dir, "directory for histogram_phi{k}.json (with --manifest)");
    correlate->add_option("--phi-setting", phi_setting, "analyzer phase index k (phi = k pi/3)")
        ->check(CLI::Range(0, 2));
    correlate->add_option("--phi-rad", phi_rad, "analyzer phase in radians");
    correlate->add_option("--theta-rad", theta_rad, "analyzer polar angle");
    correlate->add_option("--bin-width-ns", bin_width_ns, "coincidence bin width");
    correlate->add_option("--tau-max-ns", tau_max_ns, "histogram half range");
    correlate->add_option("--acquisition-time-s", acquisition_time, "live time for g2 normalization");
    correlate->add_option("--out", correlate_out, "output histogram JSON (default stdout)");

    // reconstruct
    auto* reconstruct = app.add_subcommand("reconstruct", "invert three histograms into psi(tau)");
    std::vector<std::string> histogram_paths;
    std::string background_mode = "none", gamma_mode = "per_bin", root = "larger", reconstruct_out;
    double wing_fraction = 0.2;
    reconstruct->add_option("--histograms", histogram_paths, "histograms at phi = 0, pi/3, 2pi/3")
        ->expected(3)
        ->required()
        ->check(CLI::ExistingFile);
    reconstruct->add_option("--background-mode", background_mode, "none | wing_subtract");
    reconstruct->add_option("--gamma-mode", gamma_mode, "per_bin | pooled");
    reconstruct->add_option("--wing-fraction", wing_fraction, "fraction of bins per side used as wings");
    reconstruct->add_option("--root", root, "larger | smaller");
    reconstruct->add_option("--out", reconstruct_out, "output reconstruction JSON (default stdout)");

    // fit
    auto* fit = app.add_subcommand("fit", "double-exponential and constant-phase fits");
    std::string fit_input, fit_out;
    std::optional<double> fix_corr_time_ns;
    double phase_threshold = 0.1;
    fit->add_option("--reconstruction", fit_input, "reconstruction JSON")->required()->check(CLI::ExistingFile);
    fit->add_option("--fix-corr-time-ns", fix_corr_time_ns, "hold the decay time fixed");
    fit->add_option("--phase-threshold", phase_threshold, "|psi|^2 fraction of peak for the phase fit");
    fit->add_option("--out", fit_out, "output fit JSON (default stdout)");

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "simulate, correlate, reconstruct and fit into one run directory");
    ConfigFlags pipeline_flags;
    pipeline_flags.attach(pipeline);

    // visibility
    auto* visibility = app.add_subcommand("visibility", "g2(0) versus analyzer phase with A + B cos 2phi fit");
    ConfigFlags visibility_flags;
    visibility_flags.attach(visibility);
    std::size_t n_settings = 8;
    std::string visibility_out;
    visibility->add_option("--settings", n_settings, "number of phases phi = k pi / n");
    visibility->add_option("--out", visibility_out, "output JSON (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*simulate) {
            const auto config = simulate_flags.resolve();
            const auto run = cmd_simulate(config, config.output_dir);
            std::cout << run.manifest.string() << "\n";
        } else if (*correlate) {
            if (!correlate_manifest.empty()) {
                const fs::path dir = correlate_dir.empty() ? fs::path(correlate_manifest).parent_path() : fs::path(correlate_dir);
                for (const auto& p : cmd_correlate_run(correlate_manifest, dir, bin_width_ns * 1e-9, tau_max_ns * 1e-9)) {
                    std::cout << p.string() << "\n";
                }
            } else {
                if (correlate_inputs.empty()) throw ConfigError("correlate: give --input files or --manifest");
                if (phi_setting && phi_rad) throw ConfigError("correlate: --phi-setting and --phi-rad are exclusive");
                const double phi = phi_setting ? kTomographyPhases[static_cast<std::size_t>(*phi_setting)]
                                               : phi_rad.value_or(0.0);
                const AnalyzerSetting setting{theta_rad, phi};
                setting.validate();
                std::vector<fs::path> inputs(correlate_inputs.begin(), correlate_inputs.end());
                emit(cmd_correlate(inputs, setting, bin_width_ns * 1e-9, tau_max_ns * 1e-9, acquisition_time),
                     correlate_out);
            }
        } else if (*reconstruct) {
            ReconstructionOptions options;
            options.background_mode = parse_background_mode(background_mode);
            options.gamma_mode = parse_gamma_mode(gamma_mode);
            options.wing_fraction = wing_fraction;
            if (root != "larger" && root != "smaller") throw ConfigError("--root must be larger or smaller");
            options.root = root == "larger" ? RootChoice::larger : RootChoice::smaller;
            const std::array<fs::path, 3> paths = {histogram_paths[0], histogram_paths[1], histogram_paths[2]};
            emit(cmd_reconstruct(paths, options), reconstruct_out);
        } else if (*fit) {
            std::optional<double> fixed;
            if (fix_corr_time_ns) fixed = *fix_corr_time_ns * 1e-9;
            emit(cmd_fit(read_json(fit_input), fixed, phase_threshold), fit_out);
        } else if (*pipeline) {
            const auto config = pipeline_flags.resolve();
            emit(cmd_pipeline(config), "");
        } else if (*visibility) {
            emit(cmd_visibility(visibility_flags.resolve(), n_settings), visibility_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    }
    return kOk;
}
