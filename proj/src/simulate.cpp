#include "biphoton/simulate.hpp"

#include <algorithm>
#include <string>

namespace biphoton {

namespace {

// Integral of exp(-k |x|) from 0 to x (odd in x).
double abs_exp_antiderivative(double x, double k) {
    const double magnitude = -std::expm1(-k * std::abs(x)) / k;
    return x < 0.0 ? -magnitude : magnitude;
}

double abs_exp_integral(double lo, double hi, double center, double k) {
    return abs_exp_antiderivative(hi - center, k) - abs_exp_antiderivative(lo - center, k);
}

double effective_duration(const SimConfig& config) {
    return config.gate ? config.duration * config.gate->open_fraction : config.duration;
}

std::vector<Picoseconds> uniform_times(Rng& rng, std::uint64_t n, Picoseconds duration_ps) {
    std::uniform_int_distribution<Picoseconds> uniform(0, duration_ps - 1);
    std::vector<Picoseconds> out(n);
    for (auto& t : out) t = uniform(rng);
    return out;
}

void apply_jitter(Rng& rng, std::vector<Picoseconds>& tags, double sigma, Picoseconds duration_ps) {
    if (sigma <= 0.0) return;
    std::normal_distribution<double> noise(0.0, sigma * kPicosecondsPerSecond);
    for (auto& t : tags) t += static_cast<Picoseconds>(std::llround(noise(rng)));
    std::erase_if(tags, [&](Picoseconds t) { return t < 0 || t >= duration_ps; });
}

void apply_dead_time(std::vector<Picoseconds>& tags, Picoseconds dead_ps) {
    if (dead_ps <= 0 || tags.empty()) return;
    std::size_t kept = 1;
    Picoseconds last = tags.front();
    for (std::size_t i = 1; i < tags.size(); ++i) {
        if (tags[i] - last >= dead_ps) {
            last = tags[i];
            tags[kept++] = tags[i];
        }
    }
    tags.resize(kept);
}

}  // namespace

void SimConfig::validate(const TpwfModel& model) const {
    model.validate();
    for (double rate : {pair_rate, singles_rate_a, singles_rate_b}) {
        if (!(rate >= 0.0) || !std::isfinite(rate)) throw ConfigError("SimConfig: rates must be finite and >= 0");
    }
    if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("SimConfig: duration must be positive");
    if (duration * kPicosecondsPerSecond > 9e18) throw ConfigError("SimConfig: duration overflows picoseconds");
    if (!(jitter_sigma >= 0.0)) throw ConfigError("SimConfig: jitter_sigma must be >= 0");
    if (!(dead_time >= 0.0)) throw ConfigError("SimConfig: dead_time must be >= 0");
    if (!(tau_window >= 10.0 * model.corr_time)) {
        throw ConfigError("SimConfig: tau_window must be at least 10 correlation times (" +
                          std::to_string(10.0 * model.corr_time) + " s)");
    }
    if (gate) {
        if (!(gate->period > 0.0)) throw ConfigError("SimConfig: gate period must be positive");
        if (!(gate->open_fraction > 0.0 && gate->open_fraction <= 1.0)) {
            throw ConfigError("SimConfig: gate open_fraction must lie in (0, 1]");
        }
    }
    if (expected_tags() > max_tags) {
        throw ConfigError("SimConfig: expected tag count " + std::to_string(expected_tags()) +
                          " exceeds the memory budget " + std::to_string(max_tags));
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double pair_delay_mass(const AnalyzerSetting& setting, const TpwfModel& model, ReferenceAmplitude gamma,
                       double lo, double hi) {
    // y = s^2 [gamma^2 + A^2 e^{-2|d|/Tc} - 2 gamma A cos(phase + 2 phi) e^{-|d|/Tc}]
    const double port = std::sin(2.0 * setting.theta);
    const double a = model.amplitude;
    const double g = gamma.gamma;
    const double interference = 2.0 * g * a * std::cos(model.phase + 2.0 * setting.phi);
    const double flat = g * g * (hi - lo);
    const double signal = a * a * abs_exp_integral(lo, hi, model.tau_offset, 2.0 / model.corr_time);
    const double cross = interference * abs_exp_integral(lo, hi, model.tau_offset, 1.0 / model.corr_time);
    return port * port * std::max(0.0, flat + signal - cross);
}

double setting_pair_rate(const SimConfig& config, const AnalyzerSetting& setting, const TpwfModel& model,
                         ReferenceAmplitude gamma) {
    if (!(config.pair_rate > 0.0)) return 0.0;
    const double w = config.tau_window;
    const double g = gamma.gamma;
    const double a = model.amplitude;
    const double reference = g * g * 2.0 * w + a * a * abs_exp_integral(-w, w, model.tau_offset, 2.0 / model.corr_time);
    if (!(reference > 0.0)) throw NumericalError("pair-delay density integrates to zero");
    return config.pair_rate * pair_delay_mass(setting, model, gamma, -w, w) / reference;
}

PairDelaySampler::PairDelaySampler(const AnalyzerSetting& setting, const TpwfModel& model,
                                   ReferenceAmplitude gamma, double window)
    : window_(window), cdf_(kGridPoints, 0.0) {
    if (!(window > 0.0)) throw ConfigError("PairDelaySampler: window must be positive");
    for (std::size_t i = 1; i < kGridPoints; ++i) {
        cdf_[i] = cdf_[i - 1] + pair_delay_mass(setting, model, gamma, node(i - 1), node(i));
    }
    const double total = cdf_.back();
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw NumericalError("pair-delay density integrates to zero");
    }
    for (auto& c : cdf_) c /= total;
    cdf_.back() = 1.0;
}

double PairDelaySampler::node(std::size_t i) const {
    return -window_ + 2.0 * window_ * static_cast<double>(i) / static_cast<double>(kGridPoints - 1);
}

double PairDelaySampler::operator()(Rng& rng) const {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    // u in [cdf[i], cdf[i+1]); empty cells are never selected.
    const auto i = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - cdf_.begin(), 1, kGridPoints - 1)) - 1;
    const double width = cdf_[i + 1] - cdf_[i];
    const double frac = width > 0.0 ? (u - cdf_[i]) / width : 0.5;
    return std::clamp(node(i) + frac * (node(i + 1) - node(i)), -window_, window_);
}

double sample_pair_delay(Rng& rng, const AnalyzerSetting& setting, const TpwfModel& model,
                         ReferenceAmplitude gamma, double window) {
    return PairDelaySampler(setting, model, gamma, window)(rng);
}

StreamPair generate_stream(const SimConfig& config, const AnalyzerSetting& setting, const TpwfModel& model,
                           ReferenceAmplitude gamma, std::uint64_t stream_index) {
    config.validate(model);
    setting.validate();
    gamma.validate();

    Rng rng(derive_seed(config.seed, stream_index));
    const Picoseconds duration_ps = to_picoseconds(config.duration);

    StreamPair out;
    out.a.channel = Channel::A;
    out.b.channel = Channel::B;
    auto& a = out.a.timestamps;
    auto& b = out.b.timestamps;

    const double pair_rate = setting_pair_rate(config, setting, model, gamma);
    std::poisson_distribution<std::uint64_t> pair_count(pair_rate * config.duration);
    const std::uint64_t n_pairs = pair_rate > 0.0 ? pair_count(rng) : 0;
    if (n_pairs > 0) {
        const PairDelaySampler sampler(setting, model, gamma, config.tau_window);
        std::uniform_int_distribution<Picoseconds> midpoint(0, duration_ps - 1);
        a.reserve(n_pairs);
        b.reserve(n_pairs);
        for (std::uint64_t i = 0; i < n_pairs; ++i) {
            const Picoseconds t = midpoint(rng);
            const Picoseconds tau = to_picoseconds(sampler(rng));
            const Picoseconds half = tau / 2;
            const Picoseconds ta = t + (tau - half);
            const Picoseconds tb = t - half;
            if (ta >= 0 && ta < duration_ps) a.push_back(ta);
            if (tb >= 0 && tb < duration_ps) b.push_back(tb);
        }
    }

    for (auto [rate, tags] : {std::pair{config.singles_rate_a, &a}, std::pair{config.singles_rate_b, &b}}) {
        if (rate <= 0.0) continue;
        std::poisson_distribution<std::uint64_t> count(rate * config.duration);
        const auto singles = uniform_times(rng, count(rng), duration_ps);
        tags->insert(tags->end(), singles.begin(), singles.end());
    }

    const Picoseconds dead_ps = to_picoseconds(config.dead_time);
    for (auto* stream : {&out.a, &out.b}) {
        apply_jitter(rng, stream->timestamps, config.jitter_sigma, duration_ps);
        std::sort(stream->timestamps.begin(), stream->timestamps.end());
        apply_dead_time(stream->timestamps, dead_ps);
        stream->acquisition_time = config.duration;
        if (config.gate) *stream = apply_gate(*stream, config.gate->period, config.gate->open_fraction);
    }
    return out;
}

std::vector<double> expected_histogram(const SimConfig& config, const AnalyzerSetting& setting,
                                       const TpwfModel& model, ReferenceAmplitude gamma, double bin_width,
                                       double tau_max) {
    config.validate(model);
    setting.validate();
    gamma.validate();
    const BinGrid grid = BinGrid::from_seconds(bin_width, tau_max);
    const double width = to_seconds(grid.bin_width);
    const double lo_edge = -to_seconds(grid.tau_max);
    const double live = effective_duration(config);
    const double window = config.tau_window;

    const double pair_rate = setting_pair_rate(config, setting, model, gamma);
    double pair_norm = 0.0;
    if (pair_rate > 0.0) pair_norm = pair_rate * live / pair_delay_mass(setting, model, gamma, -window, window);
    const double accidental = (config.singles_rate_a + pair_rate) * (config.singles_rate_b + pair_rate) * width * live;

    std::vector<double> mean(grid.bins());
    for (std::size_t k = 0; k < mean.size(); ++k) {
        const double lo = std::max(lo_edge + static_cast<double>(k) * width, -window);
        const double hi = std::min(lo_edge + static_cast<double>(k + 1) * width, window);
        const double pairs = (hi > lo && pair_norm > 0.0) ? pair_norm * pair_delay_mass(setting, model, gamma, lo, hi)
                                                          : 0.0;
        mean[k] = pairs + accidental;
    }
    return mean;
}

CoincidenceHistogram rate_level_histogram(const SimConfig& config, const AnalyzerSetting& setting,
                                          const TpwfModel& model, ReferenceAmplitude gamma, double bin_width,
                                          double tau_max, std::uint64_t stream_index) {
    CoincidenceHistogram hist;
    hist.expected = expected_histogram(config, setting, model, gamma, bin_width, tau_max);
    const BinGrid grid = BinGrid::from_seconds(bin_width, tau_max);
    hist.bin_width = to_seconds(grid.bin_width);
    hist.tau_max = to_seconds(grid.tau_max);
    hist.tau_min = -hist.tau_max;
    hist.setting = setting;

    const double live = effective_duration(config);
    hist.acquisition_time = live;
    const double pair_rate = setting_pair_rate(config, setting, model, gamma);
    hist.singles_a = static_cast<std::uint64_t>(std::llround((config.singles_rate_a + pair_rate) * live));
    hist.singles_b = static_cast<std::uint64_t>(std::llround((config.singles_rate_b + pair_rate) * live));

    Rng rng(derive_seed(config.seed, stream_index));
    hist.counts.resize(hist.expected.size());
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        const double mean = hist.expected[k];
        hist.counts[k] = mean > 0.0 ? std::poisson_distribution<std::uint64_t>(mean)(rng) : 0;
    }
    return hist;
}

}  // namespace biphoton
