#include "biphoton/reconstruct.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include <omp.h>

namespace biphoton {

namespace {

constexpr double kSqrt3 = std::numbers::sqrt3;
constexpr double kRadicandTolerance = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Outputs differentiated by the error propagation.
enum Output { kRe, kIm, kGamma, kAbs2, kArg, kGap, kOutputs };
using OutputVector = std::array<double, kOutputs>;

std::optional<OutputVector> evaluate(const std::array<double, 3>& y, std::optional<double> fixed_gamma,
                                     RootChoice root) {
    const BinEstimate est = fixed_gamma ? reconstruct_bin_fixed_gamma(y[0], y[1], y[2], *fixed_gamma)
                                        : reconstruct_bin(y[0], y[1], y[2], root);
    if (!est.ok()) return std::nullopt;
    const double abs2 = est.re_psi * est.re_psi + est.im_psi * est.im_psi;
    // arg psi does not depend on gamma, so evaluate it from the numerators.
    const auto num = tomography_numerators(y[0], y[1], y[2]);
    return OutputVector{est.re_psi,
                        est.im_psi,
                        est.gamma,
                        abs2,
                        std::atan2(num.y1_minus_y2 / kSqrt3, num.mean_minus_y0),
                        est.gamma * est.gamma - abs2};
}

double wrap_angle(double x) { return std::remainder(x, 2.0 * kPi); }

BinUncertainty infinite_uncertainty() {
    return {kInf, kInf, kInf, kInf, kInf, kInf, false};
}

double wing_level(const PhaseTriple& triple, double wing_fraction, double* sigma) {
    double level = 0.0;
    double var = 0.0;
    const auto maps = shared_g2_normalization(triple.settings);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& hist = triple.settings[k];
        const auto est = background_estimate(hist, wing_fraction);
        const double rescale = maps[k].scale / g2_scale(hist);
        level += (est.level * rescale + maps[k].offset) / 3.0;
        var += est.sigma * est.sigma * rescale * rescale / 9.0;
    }
    if (sigma) *sigma = std::sqrt(var);
    return level;
}

// gamma^2 from the offset-free numerators: gamma^2 |psi|^2 = |P|^2 and
// ybar - c = |psi|^2 with c the wing level, summed over the bins in `mask`.
// The Poisson variance of |P|^2 is removed from the numerator.
std::optional<double> gamma2_from_peak(const std::vector<std::array<double, 3>>& y,
                                       const std::vector<std::array<double, 3>>& sigma_y,
                                       const std::vector<bool>& mask, double wing) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!mask[i]) continue;
        const auto& v = y[i];
        const auto& s = sigma_y[i];
        const auto n = tomography_numerators(v[0], v[1], v[2]);
        const double p_re = n.mean_minus_y0 / 2.0;
        const double p_im = n.y1_minus_y2 / (2.0 * kSqrt3);
        const double var_re = (4.0 * s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) / 36.0;
        const double var_im = (s[1] * s[1] + s[2] * s[2]) / 12.0;
        num += p_re * p_re + p_im * p_im - var_re - var_im;
        den += (v[0] + v[1] + v[2]) / 3.0 - wing;
    }
    if (!(num > 0.0) || !(den > 0.0)) return std::nullopt;
    return num / den;
}

// Constant offset B such that the wing level c = gamma^2 + B, with gamma^2
// taken from the peak region. Two refinement passes re-select the peak bins
// from the reconstructed |psi|^2.
double estimate_offset(const std::vector<std::array<double, 3>>& y, const std::vector<std::array<double, 3>>& sigma_y,
                       double wing, RootChoice root) {
    const std::size_t n = y.size();
    std::vector<double> excess(n);
    for (std::size_t i = 0; i < n; ++i) excess[i] = (y[i][0] + y[i][1] + y[i][2]) / 3.0 - wing;
    const double peak = *std::max_element(excess.begin(), excess.end());
    if (!(peak > 0.0)) return 0.0;
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = excess[i] > 0.1 * peak;

    auto gamma2 = gamma2_from_peak(y, sigma_y, mask, wing);
    if (!gamma2) return 0.0;
    double offset = wing - *gamma2;
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<double> abs2(n, -1.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto est = reconstruct_bin(y[i][0] - offset, y[i][1] - offset, y[i][2] - offset, root);
            if (est.ok()) abs2[i] = est.re_psi * est.re_psi + est.im_psi * est.im_psi;
        }
        const double top = *std::max_element(abs2.begin(), abs2.end());
        if (!(top > 0.0)) break;
        for (std::size_t i = 0; i < n; ++i) mask[i] = abs2[i] > 0.1 * top;
        gamma2 = gamma2_from_peak(y, sigma_y, mask, wing);
        if (!gamma2) break;
        offset = wing - *gamma2;
    }
    return offset;
}

void reconstruct_one(ReconstructedBin& bin, const std::array<double, 3>& sigma_y,
                     const std::array<std::uint64_t, 3>& counts, RootChoice root) {
    const BinEstimate est = reconstruct_bin(bin.y[0], bin.y[1], bin.y[2], root);
    bin.re_psi = est.re_psi;
    bin.im_psi = est.im_psi;
    bin.gamma = est.gamma;
    bin.radicand = est.radicand;
    bin.status = est.status;
    if (std::find(counts.begin(), counts.end(), 0U) != counts.end()) {
        bin.status = BinStatus::no_counts;
    }
    BinUncertainty unc = infinite_uncertainty();
    if (bin.valid()) unc = propagate_errors_sigma(bin.y, sigma_y, std::nullopt, root);
    bin.sigma_re = unc.sigma_re;
    bin.sigma_im = unc.sigma_im;
    bin.sigma_gamma = unc.sigma_gamma;
    bin.sigma_abs2 = unc.sigma_abs2;
    bin.sigma_arg = unc.sigma_arg;
    bin.root_ambiguous = bin.valid() && unc.finite && std::sqrt(std::max(est.radicand, 0.0)) < 2.0 * unc.sigma_gap;
}

}  // namespace

std::string to_string(BinStatus status) {
    switch (status) {
        case BinStatus::ok: return "ok";
        case BinStatus::negative_radicand: return "negative_radicand";
        case BinStatus::zero_gamma: return "zero_gamma";
        case BinStatus::no_counts: return "no_counts";
    }
    return "unknown";
}

std::string to_string(BackgroundMode mode) {
    return mode == BackgroundMode::none ? "none" : "wing_subtract";
}

std::string to_string(GammaMode mode) { return mode == GammaMode::per_bin ? "per_bin" : "pooled"; }

BackgroundMode parse_background_mode(const std::string& text) {
    if (text == "none") return BackgroundMode::none;
    if (text == "wing_subtract") return BackgroundMode::wing_subtract;
    throw ConfigError("unknown background mode '" + text + "' (expected none | wing_subtract)");
}

GammaMode parse_gamma_mode(const std::string& text) {
    if (text == "per_bin") return GammaMode::per_bin;
    if (text == "pooled") return GammaMode::pooled;
    throw ConfigError("unknown gamma mode '" + text + "' (expected per_bin | pooled)");
}

TomographyNumerators tomography_numerators(double y0, double y1, double y2) {
    return {((y1 - y0) + (y2 - y0)) / 3.0, y1 - y2};
}

double tomography_radicand(double y0, double y1, double y2) {
    const double ybar = (y0 + y1 + y2) / 3.0;
    const double d0 = y0 - ybar;
    const double d1 = y1 - ybar;
    const double d2 = y2 - ybar;
    return ybar * ybar - (2.0 / 3.0) * (d0 * d0 + d1 * d1 + d2 * d2);
}

BinEstimate reconstruct_bin(double y0, double y1, double y2, RootChoice root) {
    BinEstimate est;
    const double ybar = (y0 + y1 + y2) / 3.0;
    est.radicand = tomography_radicand(y0, y1, y2);
    if (!(ybar > 0.0)) {
        est.status = BinStatus::zero_gamma;
        return est;
    }
    if (est.radicand < -kRadicandTolerance * ybar * ybar) {
        est.status = BinStatus::negative_radicand;
        return est;
    }
    const double root_term = std::sqrt(std::max(est.radicand, 0.0));
    const double gamma2 = root == RootChoice::larger ? (ybar + root_term) / 2.0 : (ybar - root_term) / 2.0;
    if (!(gamma2 > 0.0)) {
        est.status = BinStatus::zero_gamma;
        return est;
    }
    const auto num = tomography_numerators(y0, y1, y2);
    est.gamma = std::sqrt(gamma2);
    est.re_psi = num.mean_minus_y0 / (2.0 * est.gamma);
    est.im_psi = num.y1_minus_y2 / (2.0 * kSqrt3 * est.gamma);
    return est;
}

BinEstimate reconstruct_bin_fixed_gamma(double y0, double y1, double y2, double gamma) {
    BinEstimate est;
    est.radicand = tomography_radicand(y0, y1, y2);
    est.gamma = gamma;
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        est.status = BinStatus::zero_gamma;
        return est;
    }
    const auto num = tomography_numerators(y0, y1, y2);
    est.re_psi = num.mean_minus_y0 / (2.0 * gamma);
    est.im_psi = num.y1_minus_y2 / (2.0 * kSqrt3 * gamma);
    return est;
}

BinUncertainty propagate_errors_sigma(const std::array<double, 3>& y, const std::array<double, 3>& sigma_y,
                                      std::optional<double> fixed_gamma, RootChoice root) {
    const auto center = evaluate(y, fixed_gamma, root);
    if (!center) return infinite_uncertainty();
    for (double s : sigma_y) {
        if (!std::isfinite(s) || s < 0.0) return infinite_uncertainty();
    }

    const double ybar = (y[0] + y[1] + y[2]) / 3.0;
    const double h = 1e-6 * (ybar > 0.0 ? ybar : 1.0);
    OutputVector variance{};
    for (int k = 0; k < 3; ++k) {
        auto up = y;
        auto down = y;
        up[k] += h;
        down[k] -= h;
        const auto fp = evaluate(up, fixed_gamma, root);
        const auto fm = evaluate(down, fixed_gamma, root);
        for (int o = 0; o < kOutputs; ++o) {
            double derivative = 0.0;
            if (fp && fm) {
                const double diff = (*fp)[o] - (*fm)[o];
                derivative = (o == kArg ? wrap_angle(diff) : diff) / (2.0 * h);
            } else if (fp || fm) {
                // One side crosses the radicand boundary; fall back to a one-sided difference.
                const double diff = fp ? (*fp)[o] - (*center)[o] : (*center)[o] - (*fm)[o];
                derivative = (o == kArg ? wrap_angle(diff) : diff) / h;
            } else {
                return infinite_uncertainty();
            }
            variance[o] += derivative * derivative * sigma_y[k] * sigma_y[k];
        }
    }
    BinUncertainty out;
    out.sigma_re = std::sqrt(variance[kRe]);
    out.sigma_im = std::sqrt(variance[kIm]);
    out.sigma_gamma = fixed_gamma ? 0.0 : std::sqrt(variance[kGamma]);
    out.sigma_abs2 = std::sqrt(variance[kAbs2]);
    out.sigma_arg = std::sqrt(variance[kArg]);
    out.sigma_gap = std::sqrt(variance[kGap]);
    return out;
}

BinUncertainty propagate_errors(const std::array<double, 3>& y, const std::array<std::uint64_t, 3>& counts,
                                RootChoice root) {
    std::array<double, 3> sigma{};
    for (int k = 0; k < 3; ++k) {
        if (counts[k] == 0) return infinite_uncertainty();
        sigma[k] = y[k] / std::sqrt(static_cast<double>(counts[k]));
    }
    return propagate_errors_sigma(y, sigma, std::nullopt, root);
}

void PhaseTriple::validate() const {
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& hist = settings[k];
        hist.validate();
        if (!hist.same_binning(settings[0])) {
            throw DataError("phase triple: histogram " + std::to_string(k) + " has different binning");
        }
        if (std::abs(hist.setting.theta - kPi / 4.0) > 1e-6 ||
            std::abs(hist.setting.phi - kTomographyPhases[k]) > 1e-6) {
            throw DataError("phase triple: histogram " + std::to_string(k) +
                            " is not at theta = pi/4, phi = " + std::to_string(k) + " pi/3");
        }
    }
}

std::size_t ReconstructedTpwf::valid_count() const {
    return static_cast<std::size_t>(
        std::count_if(bins.begin(), bins.end(), [](const ReconstructedBin& b) { return b.valid(); }));
}

BackgroundEstimate background_estimate(const CoincidenceHistogram& hist, double wing_fraction) {
    if (!(wing_fraction > 0.0 && wing_fraction <= 0.4)) {
        throw ConfigError("background_estimate: wing_fraction must lie in (0, 0.4]");
    }
    const std::size_t n = hist.counts.size();
    const auto per_side = static_cast<std::size_t>(std::floor(wing_fraction * static_cast<double>(n)));
    if (per_side < 5) {
        throw DataError("background_estimate: fewer than 5 wing bins per side");
    }
    const double scale = g2_scale(hist);
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < per_side; ++i) sum += hist.counts[i] + hist.counts[n - 1 - i];
    const double bins = 2.0 * static_cast<double>(per_side);
    return {static_cast<double>(sum) * scale / bins, std::sqrt(static_cast<double>(sum)) * scale / bins};
}

namespace kernels {

void reconstruct_bins_serial(std::span<ReconstructedBin> bins, std::span<const std::array<double, 3>> sigma_y,
                             std::span<const std::array<std::uint64_t, 3>> counts, RootChoice root) {
    for (std::size_t i = 0; i < bins.size(); ++i) reconstruct_one(bins[i], sigma_y[i], counts[i], root);
}

void reconstruct_bins_parallel(std::span<ReconstructedBin> bins, std::span<const std::array<double, 3>> sigma_y,
                               std::span<const std::array<std::uint64_t, 3>> counts, RootChoice root) {
    const auto n = static_cast<std::ptrdiff_t>(bins.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) reconstruct_one(bins[i], sigma_y[i], counts[i], root);
}

}  // namespace kernels

ReconstructedTpwf reconstruct_curve(const PhaseTriple& triple, const ReconstructionOptions& options) {
    triple.validate();
    const std::size_t n = triple.settings[0].size();

    ReconstructedTpwf out;
    out.bin_width = triple.settings[0].bin_width;
    out.options = options;

    std::vector<std::array<double, 3>> y(n);
    std::vector<std::array<double, 3>> sigma_y(n);
    std::vector<std::array<std::uint64_t, 3>> counts(n);
    const auto maps = shared_g2_normalization(triple.settings);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& hist = triple.settings[k];
        const double scale = maps[k].scale;
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<double>(hist.counts[i]);
            y[i][k] = maps[k](c);
            sigma_y[i][k] = std::sqrt(c) * scale;
            counts[i][k] = hist.counts[i];
        }
    }

    if (options.background_mode == BackgroundMode::wing_subtract) {
        double sigma_wing = 0.0;
        out.wing_level = wing_level(triple, options.wing_fraction, &sigma_wing);
        out.background = estimate_offset(y, sigma_y, out.wing_level, options.root);
        out.sigma_background = sigma_wing;
        for (auto& v : y) {
            for (double& yk : v) yk -= out.background;
        }
    } else {
        try {
            out.wing_level = wing_level(triple, options.wing_fraction, nullptr);
        } catch (const std::exception&) {
            // Informational only in this mode; short or unnormalizable histograms skip it.
            out.wing_level = std::numeric_limits<double>::quiet_NaN();
        }
    }

    out.bins.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.bins[i].tau = triple.settings[0].bin_center(i);
        out.bins[i].y = y[i];
    }
    kernels::reconstruct_bins_parallel(out.bins, sigma_y, counts, options.root);

    if (options.gamma_mode == GammaMode::pooled) {
        double weight_sum = 0.0;
        double weighted = 0.0;
        for (const auto& bin : out.bins) {
            if (!bin.valid() || !(bin.sigma_gamma > 0.0) || !std::isfinite(bin.sigma_gamma)) continue;
            const double w = 1.0 / (bin.sigma_gamma * bin.sigma_gamma);
            weight_sum += w;
            weighted += w * bin.gamma;
        }
        if (!(weight_sum > 0.0)) throw NumericalError("pooled gamma: no bins with finite gamma uncertainty");
        out.pooled_gamma = weighted / weight_sum;
        out.sigma_pooled_gamma = 1.0 / std::sqrt(weight_sum);

        // psi follows from the offset-free numerators; the per-bin radicand
        // no longer enters, so only empty or zero-level bins stay invalid.
        for (std::size_t i = 0; i < n; ++i) {
            auto& bin = out.bins[i];
            if (bin.status == BinStatus::no_counts || bin.status == BinStatus::zero_gamma) continue;
            const auto est = reconstruct_bin_fixed_gamma(bin.y[0], bin.y[1], bin.y[2], out.pooled_gamma);
            const auto unc = propagate_errors_sigma(bin.y, sigma_y[i], out.pooled_gamma, options.root);
            bin.status = est.status;
            bin.re_psi = est.re_psi;
            bin.im_psi = est.im_psi;
            bin.gamma = out.pooled_gamma;
            bin.sigma_re = unc.sigma_re;
            bin.sigma_im = unc.sigma_im;
            bin.sigma_gamma = out.sigma_pooled_gamma;
            bin.sigma_abs2 = unc.sigma_abs2;
            bin.sigma_arg = unc.sigma_arg;
            const double gap = out.pooled_gamma * out.pooled_gamma - bin.abs2();
            bin.root_ambiguous = unc.finite && gap < 2.0 * unc.sigma_gap;
        }
    }

    const std::size_t invalid = n - out.valid_count();
    if (2 * invalid > n) {
        throw NumericalError("reconstruction: " + std::to_string(invalid) + " of " + std::to_string(n) +
                             " bins invalid");
    }
    return out;
}

}  // namespace biphoton
