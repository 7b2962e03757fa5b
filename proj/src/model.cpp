#include "biphoton/model.hpp"

#include <string>

namespace biphoton {

void TpwfModel::validate() const {
    if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
        throw ConfigError("TpwfModel: amplitude must be positive and finite");
    }
    if (!(corr_time > 0.0) || !std::isfinite(corr_time)) {
        throw ConfigError("TpwfModel: corr_time must be positive and finite");
    }
    if (!std::isfinite(tau_offset) || !std::isfinite(phase)) {
        throw ConfigError("TpwfModel: tau_offset and phase must be finite");
    }
}

void AnalyzerSetting::validate() const {
    if (!(theta >= 0.0 && theta <= kPi / 2.0)) {
        throw ConfigError("AnalyzerSetting: theta must lie in [0, pi/2], got " +
                          std::to_string(theta));
    }
    if (!(phi >= 0.0 && phi < kPi)) {
        throw ConfigError("AnalyzerSetting: phi must lie in [0, pi), got " + std::to_string(phi));
    }
}

void ReferenceAmplitude::validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw ConfigError("ReferenceAmplitude: gamma must be finite and >= 0");
    }
}

Complex tpwf_eval(const TpwfModel& model, double tau) {
    const double envelope = model.amplitude * std::exp(-std::abs(tau - model.tau_offset) / model.corr_time);
    return std::polar(envelope, model.phase);
}

Complex forward_two_photon_amplitude(const AnalyzerSetting& setting, ReferenceAmplitude gamma,
                                     Complex psi) {
    const double mix = std::cos(setting.theta) * std::sin(setting.theta);
    const Complex reference_term = std::polar(gamma.gamma, -setting.phi);
    const Complex signal_term = std::polar(1.0, setting.phi) * psi;
    return mix * (reference_term - signal_term);
}

double forward_g2(const AnalyzerSetting& setting, ReferenceAmplitude gamma, Complex psi,
                  double background) {
    // |A|^2 = cos^2 sin^2 |gamma e^{-2i phi} - psi|^2; the 1/4 at theta = pi/4
    // is absorbed into the normalization.
    const double port = std::sin(2.0 * setting.theta);
    const Complex difference = std::polar(gamma.gamma, -2.0 * setting.phi) - psi;
    return port * port * std::norm(difference) + background;
}

double bandwidth_to_corr_time(double fwhm_hz) {
    if (!(fwhm_hz > 0.0) || !std::isfinite(fwhm_hz)) {
        throw ConfigError("bandwidth must be positive and finite");
    }
    return 1.0 / (kPi * fwhm_hz);
}

double bandwidth_to_intensity_fwhm(double fwhm_hz) {
    return corr_time_to_intensity_fwhm(bandwidth_to_corr_time(fwhm_hz));
}

double corr_time_to_intensity_fwhm(double corr_time) { return corr_time * std::numbers::ln2; }

std::vector<VisibilityPoint> visibility_curve(ReferenceAmplitude gamma, Complex psi0,
                                              std::span<const double> phis) {
    std::vector<VisibilityPoint> out;
    out.reserve(phis.size());
    for (double phi : phis) {
        out.push_back({phi, forward_g2(AnalyzerSetting{kPi / 4.0, phi}, gamma, psi0)});
    }
    return out;
}

}  // namespace biphoton
