#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "biphoton/common.hpp"

namespace biphoton {

using Complex = std::complex<double>;

/// Parametric two-photon wave function of a single-mode biphoton from a
/// sub-threshold OPO:
///
///     psi(tau) = amplitude * exp(-|tau - tau_offset| / corr_time) * exp(i phase)
///
/// Times in seconds, phase in radians.
struct TpwfModel {
    double amplitude = 1.0;
    double corr_time = 1.0;
    double tau_offset = 0.0;
    double phase = 0.0;

    /// Throws ConfigError unless amplitude > 0 and corr_time > 0.
    void validate() const;
};

/// Polarization analyzer angles on the Bloch sphere. Detector A sees
/// cos(theta) E_H + e^{i phi} sin(theta) E_V; detector B sees
/// e^{-i phi} sin(theta) E_H - cos(theta) E_V.
struct AnalyzerSetting {
    double theta = kPi / 4.0;
    double phi = 0.0;

    /// theta in [0, pi/2], phi in [0, pi).
    void validate() const;

    /// The balanced analyzer (theta = pi/4) used for reconstruction.
    static AnalyzerSetting balanced(double phi) { return {kPi / 4.0, phi}; }
};

/// Real, non-negative amplitude of the reference two-photon term. The phase
/// origin is chosen so that the coherent reference is real.
struct ReferenceAmplitude {
    double gamma = 0.0;

    void validate() const;
};

/// Analyzer phases phi = k*pi/3, k = 0, 1, 2 used by the three-setting inversion.
inline constexpr std::array<double, 3> kTomographyPhases = {0.0, kPi / 3.0, 2.0 * kPi / 3.0};

Complex tpwf_eval(const TpwfModel& model, double tau);

/// Two-photon amplitude at the A/B detector pair for the global state
/// (signal (x) coherent reference). Only the two pair terms survive: the
/// signal's one-photon amplitude is zero for any state symmetric under
/// E_V -> -E_V, so no single-photon cross term is representable here.
Complex forward_two_photon_amplitude(const AnalyzerSetting& setting, ReferenceAmplitude gamma,
                                     Complex psi);

/// Measurable coincidence rate y = |gamma e^{-2i phi} - psi|^2 + background,
/// normalized so that the balanced-analyzer prefactor is one. For general
/// theta the rate scales as sin^2(2 theta).
double forward_g2(const AnalyzerSetting& setting, ReferenceAmplitude gamma, Complex psi,
                  double background = 0.0);

/// Intensity (|psi|^2) FWHM in seconds of the biphoton from a Lorentzian
/// cavity line of FWHM `fwhm_hz`: ln2 / (pi * fwhm_hz).
double bandwidth_to_intensity_fwhm(double fwhm_hz);

/// 1/e amplitude decay time matching a Lorentzian line of FWHM `fwhm_hz`.
double bandwidth_to_corr_time(double fwhm_hz);

/// FWHM of |psi|^2 for a given amplitude decay time: corr_time * ln2.
double corr_time_to_intensity_fwhm(double corr_time);

struct VisibilityPoint {
    double phi = 0.0;
    double y = 0.0;
};

/// g2 at fixed delay versus analyzer phase for a balanced analyzer:
/// y(phi) = gamma^2 + |psi0|^2 - 2 gamma Re(psi0 e^{2 i phi}).
std::vector<VisibilityPoint> visibility_curve(ReferenceAmplitude gamma, Complex psi0,
                                              std::span<const double> phis);

}  // namespace biphoton
