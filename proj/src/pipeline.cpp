#include "biphoton/pipeline.hpp"

#include <exception>
#include <functional>
#include <map>
#include <type_traits>

namespace biphoton {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

template <class T>
void read_key(const Json& j, const char* key, T& target) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    // nlohmann converts between booleans and numbers and truncates floats to
    // integers; config values must match exactly.
    bool matches = true;
    if constexpr (std::is_integral_v<T>) {
        matches = v.is_number_unsigned();
    } else if constexpr (std::is_floating_point_v<T>) {
        matches = v.is_number();
    }
    if (!matches) throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    try {
        target = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

std::string setting_stem(std::size_t k) { return "phi" + std::to_string(k); }

Json provenance_for(const std::vector<fs::path>& inputs, double bin_width, double tau_max) {
    Json files = Json::array();
    for (const auto& p : inputs) files.push_back(p.generic_string());
    return Json{{"tool", "biphoton"}, {"tool_version", kToolVersion}, {"inputs", files},
                {"bin_width", bin_width}, {"tau_max", tau_max}};
}

// Runs body(k) for k in [0, n) on OpenMP threads and rethrows the first failure.
void parallel_for_settings(std::size_t n, const std::function<void(std::size_t)>& body) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        try {
            body(static_cast<std::size_t>(k));
        } catch (...) {
            errors[static_cast<std::size_t>(k)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

TpwfModel PipelineConfig::model() const {
    return {amplitude, corr_time_ns * 1e-9, tau_offset_ns * 1e-9, phase_rad};
}

SimConfig PipelineConfig::sim() const {
    SimConfig s;
    s.pair_rate = pair_rate_hz;
    s.singles_rate_a = singles_rate_a_hz;
    s.singles_rate_b = singles_rate_b_hz;
    s.duration = duration_s;
    s.jitter_sigma = jitter_ns * 1e-9;
    s.dead_time = dead_time_ns * 1e-9;
    s.tau_window = tau_window_ns * 1e-9;
    s.seed = seed;
    s.max_tags = max_tags;
    if (gate_period_us > 0.0) s.gate = GateMask{gate_period_us * 1e-6, gate_open_fraction};
    return s;
}

ReconstructionOptions PipelineConfig::reconstruction_options() const {
    ReconstructionOptions o;
    o.background_mode = parse_background_mode(background_mode);
    o.gamma_mode = parse_gamma_mode(gamma_mode);
    o.wing_fraction = wing_fraction;
    if (root == "larger") {
        o.root = RootChoice::larger;
    } else if (root == "smaller") {
        o.root = RootChoice::smaller;
    } else {
        throw ConfigError("root must be 'larger' or 'smaller'");
    }
    return o;
}

std::optional<double> PipelineConfig::fix_corr_time() const {
    if (!fix_corr_time_ns) return std::nullopt;
    return *fix_corr_time_ns * 1e-9;
}

void PipelineConfig::validate() const {
    model().validate();
    reference().validate();
    sim().validate(model());
    for (std::size_t k = 0; k < 3; ++k) tomography_setting(*this, k).validate();
    BinGrid::from_seconds(bin_width(), tau_max());
    (void)reconstruction_options();
    if (!(wing_fraction > 0.0 && wing_fraction <= 0.4)) throw ConfigError("wing_fraction must lie in (0, 0.4]");
    if (fix_corr_time_ns && !(*fix_corr_time_ns > 0.0)) throw ConfigError("fix_corr_time_ns must be positive");
    if (!(phase_threshold >= 0.0 && phase_threshold < 1.0)) throw ConfigError("phase_threshold must lie in [0, 1)");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

Json PipelineConfig::to_json() const {
    Json j;
    j["amplitude"] = amplitude;
    j["corr_time_ns"] = corr_time_ns;
    j["tau_offset_ns"] = tau_offset_ns;
    j["phase_rad"] = phase_rad;
    j["gamma"] = gamma;
    j["theta_rad"] = theta_rad;
    j["pair_rate_hz"] = pair_rate_hz;
    j["singles_rate_a_hz"] = singles_rate_a_hz;
    j["singles_rate_b_hz"] = singles_rate_b_hz;
    j["duration_s"] = duration_s;
    j["jitter_ns"] = jitter_ns;
    j["dead_time_ns"] = dead_time_ns;
    j["tau_window_ns"] = tau_window_ns;
    j["max_tags"] = max_tags;
    j["gate_period_us"] = gate_period_us;
    j["gate_open_fraction"] = gate_open_fraction;
    j["seed"] = seed;
    j["bin_width_ns"] = bin_width_ns;
    j["tau_max_ns"] = tau_max_ns;
    j["background_mode"] = background_mode;
    j["gamma_mode"] = gamma_mode;
    j["wing_fraction"] = wing_fraction;
    j["root"] = root;
    j["fix_corr_time_ns"] = fix_corr_time_ns ? Json(*fix_corr_time_ns) : Json(nullptr);
    j["phase_threshold"] = phase_threshold;
    j["output_dir"] = output_dir;
    return j;
}

PipelineConfig PipelineConfig::from_json(const Json& j, PipelineConfig c) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const Json known = c.to_json();
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    read_key(j, "amplitude", c.amplitude);
    read_key(j, "corr_time_ns", c.corr_time_ns);
    read_key(j, "tau_offset_ns", c.tau_offset_ns);
    read_key(j, "phase_rad", c.phase_rad);
    read_key(j, "gamma", c.gamma);
    read_key(j, "theta_rad", c.theta_rad);
    read_key(j, "pair_rate_hz", c.pair_rate_hz);
    read_key(j, "singles_rate_a_hz", c.singles_rate_a_hz);
    read_key(j, "singles_rate_b_hz", c.singles_rate_b_hz);
    read_key(j, "duration_s", c.duration_s);
    read_key(j, "jitter_ns", c.jitter_ns);
    read_key(j, "dead_time_ns", c.dead_time_ns);
    read_key(j, "tau_window_ns", c.tau_window_ns);
    read_key(j, "max_tags", c.max_tags);
    read_key(j, "gate_period_us", c.gate_period_us);
    read_key(j, "gate_open_fraction", c.gate_open_fraction);
    read_key(j, "seed", c.seed);
    read_key(j, "bin_width_ns", c.bin_width_ns);
    read_key(j, "tau_max_ns", c.tau_max_ns);
    read_key(j, "background_mode", c.background_mode);
    read_key(j, "gamma_mode", c.gamma_mode);
    read_key(j, "wing_fraction", c.wing_fraction);
    read_key(j, "root", c.root);
    if (j.contains("fix_corr_time_ns")) {
        const auto& v = j.at("fix_corr_time_ns");
        if (v.is_null()) {
            c.fix_corr_time_ns.reset();
        } else if (v.is_number()) {
            c.fix_corr_time_ns = v.get<double>();
        } else {
            throw ConfigError("config key 'fix_corr_time_ns' has the wrong type");
        }
    }
    read_key(j, "phase_threshold", c.phase_threshold);
    read_key(j, "output_dir", c.output_dir);
    return c;
}

PipelineConfig PipelineConfig::from_json(const Json& j) { return from_json(j, PipelineConfig{}); }

PipelineConfig PipelineConfig::load(const fs::path& path) {
    Json j;
    try {
        j = read_json(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return from_json(j);
}

AnalyzerSetting tomography_setting(const PipelineConfig& config, std::size_t k) {
    return {config.theta_rad, kTomographyPhases.at(k)};
}

SimulatedRun cmd_simulate(const PipelineConfig& config, const fs::path& dir) {
    config.validate();
    const SimConfig sim = config.sim();
    const TpwfModel model = config.model();

    SimulatedRun run;
    run.manifest = dir / "manifest.json";
    std::array<std::size_t, 3> tags_a{}, tags_b{};
    for (std::size_t k = 0; k < 3; ++k) {
        run.files_a[k] = dir / "tags" / (setting_stem(k) + "_A.bttg");
        run.files_b[k] = dir / "tags" / (setting_stem(k) + "_B.bttg");
    }
    fs::create_directories(dir / "tags");

    parallel_for_settings(3, [&](std::size_t k) {
        const auto streams = generate_stream(sim, tomography_setting(config, k), model, config.reference(), k);
        bttg::write_file(run.files_a[k], streams.a);
        bttg::write_file(run.files_b[k], streams.b);
        tags_a[k] = streams.a.size();
        tags_b[k] = streams.b.size();
    });

    Json settings = Json::array();
    for (std::size_t k = 0; k < 3; ++k) {
        const auto setting = tomography_setting(config, k);
        settings.push_back({{"index", k},
                            {"setting", to_json(setting)},
                            {"seed", derive_seed(config.seed, k)},
                            {"file_a", fs::relative(run.files_a[k], dir).generic_string()},
                            {"file_b", fs::relative(run.files_b[k], dir).generic_string()},
                            {"tags_a", tags_a[k]},
                            {"tags_b", tags_b[k]}});
    }
    const double live = sim.gate ? sim.duration * sim.gate->open_fraction : sim.duration;
    Json manifest{{"format", "biphoton.manifest"},
                  {"version", 1},
                  {"tool_version", kToolVersion},
                  {"units", {{"acquisition_time", "s"}, {"timestamps", "ps"}}},
                  {"config", config.to_json()},
                  {"acquisition_time", live},
                  {"settings", settings}};
    write_json(run.manifest, manifest);
    return run;
}

Json cmd_correlate(const std::vector<fs::path>& inputs, const AnalyzerSetting& setting, double bin_width,
                   double tau_max, std::optional<double> acquisition_time) {
    if (inputs.empty()) throw ConfigError("correlate: no input files");
    std::vector<TimeTagRecord> records;
    for (const auto& path : inputs) {
        auto part = bttg::read_file(path);
        records.insert(records.end(), part.begin(), part.end());
    }
    // Files may each hold one channel or both; merging keeps per-channel order
    // only if each channel comes from a single file.
    auto streams = bttg::split_channels(records, acquisition_time.value_or(0.0));
    for (auto* s : {&streams.a, &streams.b}) {
        if (!s->is_sorted()) throw DataError("correlate: a channel is split across files out of order");
    }
    auto hist = cross_correlate(streams.a, streams.b, bin_width, tau_max, setting);
    Json doc = to_json(hist);
    doc["provenance"] = provenance_for(inputs, bin_width, tau_max);
    return doc;
}

std::array<fs::path, 3> cmd_correlate_run(const fs::path& manifest_path, const fs::path& dir, double bin_width,
                                          double tau_max) {
    const Json manifest = read_json(manifest_path);
    if (manifest.value("format", "") != "biphoton.manifest") throw DataError("not a simulation manifest");
    const fs::path base = manifest_path.parent_path();
    const double live = manifest.at("acquisition_time").get<double>();
    const auto& settings = manifest.at("settings");
    if (settings.size() != 3) throw DataError("manifest must list three settings");

    std::array<fs::path, 3> out;
    parallel_for_settings(3, [&](std::size_t k) {
        const auto& s = settings.at(k);
        const std::vector<fs::path> inputs = {base / s.at("file_a").get<std::string>(),
                                              base / s.at("file_b").get<std::string>()};
        Json doc = cmd_correlate(inputs, analyzer_from_json(s.at("setting")), bin_width, tau_max, live);
        // Record inputs relative to the run directory so moved runs stay comparable.
        doc["provenance"]["inputs"] = Json::array({s.at("file_a"), s.at("file_b")});
        out[k] = dir / ("histogram_" + setting_stem(k) + ".json");
        write_json(out[k], doc);
    });
    return out;
}

Json cmd_reconstruct(const std::array<fs::path, 3>& histograms, const ReconstructionOptions& options) {
    PhaseTriple triple;
    Json inputs = Json::array();
    for (std::size_t k = 0; k < 3; ++k) {
        triple.settings[k] = histogram_from_json(read_json(histograms[k]));
        inputs.push_back(histograms[k].filename().generic_string());
    }
    for (std::size_t k = 1; k < 3; ++k) {
        if (!triple.settings[k].same_binning(triple.settings[0])) {
            throw DataError("reconstruct: histogram " + histograms[k].string() + " has mismatched binning");
        }
    }
    Json doc = to_json(reconstruct_curve(triple, options));
    doc["provenance"] = {{"tool", "biphoton"}, {"tool_version", kToolVersion}, {"inputs", inputs}};
    return doc;
}

Json cmd_fit(const Json& reconstruction, std::optional<double> fix_corr_time, double phase_threshold) {
    const auto recon = reconstruction_from_json(reconstruction);
    const auto amplitude = fit_double_exponential(recon, fix_corr_time);
    const auto phase = fit_constant_phase(recon, phase_threshold);
    Json doc{{"format", "biphoton.fits"},
             {"version", 1},
             {"double_exponential", to_json(amplitude)},
             {"constant_phase", to_json(phase)}};
    if (!amplitude.converged) throw NumericalError("double-exponential fit did not converge: " + amplitude.message);
    return doc;
}

Json cmd_pipeline(const PipelineConfig& config) {
    config.validate();
    const fs::path dir = config.output_dir;
    const auto run = cmd_simulate(config, dir);
    const auto histograms = cmd_correlate_run(run.manifest, dir, config.bin_width(), config.tau_max());
    const Json recon = cmd_reconstruct(histograms, config.reconstruction_options());
    write_json(dir / "reconstruction.json", recon);
    const Json fits = cmd_fit(recon, config.fix_corr_time(), config.phase_threshold);
    write_json(dir / "fit.json", fits);
    return fits;
}

G2Value zero_delay_g2(const CoincidenceHistogram& hist) { return zero_delay_g2(hist, {g2_scale(hist), 0.0}); }

G2Value zero_delay_g2(const CoincidenceHistogram& hist, const G2Map& map) {
    const std::size_t n = hist.size();
    if (n < 2 || n % 2 != 0) throw DataError("zero_delay_g2: histogram must be symmetric about tau = 0");
    const auto sum = static_cast<double>(hist.counts[n / 2 - 1] + hist.counts[n / 2]);
    return {map(sum / 2.0), std::sqrt(sum) * map.scale / 2.0};
}

Json cmd_visibility(const PipelineConfig& config, std::size_t n_settings) {
    config.validate();
    if (n_settings < 3) throw ConfigError("visibility scan needs at least 3 settings");
    const SimConfig sim = config.sim();
    std::vector<CoincidenceHistogram> hists(n_settings);
    parallel_for_settings(n_settings, [&](std::size_t k) {
        const AnalyzerSetting setting{config.theta_rad, kPi * static_cast<double>(k) / static_cast<double>(n_settings)};
        const auto streams = generate_stream(sim, setting, config.model(), config.reference(), 100 + k);
        hists[k] = cross_correlate(streams.a, streams.b, config.bin_width(), config.tau_max(), setting);
    });
    const auto maps = shared_g2_normalization(hists);
    std::vector<VisibilitySample> samples;
    for (std::size_t k = 0; k < n_settings; ++k) {
        const auto g2 = zero_delay_g2(hists[k], maps[k]);
        samples.push_back({hists[k].setting.phi, g2.g2, g2.sigma});
    }
    const auto fit = fit_visibility(samples);
    Json points = Json::array();
    for (const auto& s : samples) points.push_back({{"phi", s.phi}, {"g2", s.g2}, {"sigma", s.sigma}});
    return Json{{"format", "biphoton.visibility"},
                {"version", 1},
                {"units", {{"phi", "rad"}, {"g2", "normalized"}}},
                {"points", points},
                {"fit", to_json(fit)}};
}

}  // namespace biphoton
