#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biphoton/reconstruct.hpp"

namespace biphoton {

struct FitParameter {
    std::string name;
    double value = 0.0;
    double sigma = 0.0;
    bool fixed = false;
};

struct FitResult {
    std::string model;
    std::vector<FitParameter> params;
    double chi2 = 0.0;
    int ndof = 0;
    bool converged = false;
    int iterations = 0;
    std::string message;

    // Data actually used, for plotting residuals.
    std::vector<double> x;
    std::vector<double> data;
    std::vector<double> sigma;
    std::vector<double> fitted;

    const FitParameter& param(std::string_view name) const;
    double value(std::string_view name) const { return param(name).value; }
    double error(std::string_view name) const { return param(name).sigma; }
    double reduced_chi2() const;
    /// (data - fitted) / sigma per point.
    std::vector<double> pulls() const;
};

// |psi(tau)|^2 = A^2 exp(-2 |tau - tau0| / Tc), parameters ordered (A, tau0, Tc).
namespace double_exponential {

double intensity(double tau, const std::array<double, 3>& p);

/// Partial derivatives with respect to (A, tau0, Tc); the tau0 derivative is
/// taken as zero exactly at the kink.
std::array<double, 3> gradient(double tau, const std::array<double, 3>& p);

/// Weighted least-squares objective sum ((d - f) / s)^2 and its analytic gradient.
double chi2(std::span<const double> x, std::span<const double> d, std::span<const double> s,
            const std::array<double, 3>& p);
std::array<double, 3> chi2_gradient(std::span<const double> x, std::span<const double> d,
                                    std::span<const double> s, const std::array<double, 3>& p);

}  // namespace double_exponential

/// Fits |psi|^2 on valid bins with weights 1/sigma_abs2^2 for amplitude A and
/// offset tau0, and for Tc unless `fix_corr_time` is given. Damped
/// Gauss-Newton (Levenberg-Marquardt) with times rescaled to the bin width.
/// Reports derived parameter "fwhm" = Tc ln2. Throws DataError with fewer
/// than 8 usable bins; non-convergence returns converged = false.
FitResult fit_double_exponential(const ReconstructedTpwf& recon, std::optional<double> fix_corr_time = std::nullopt);

/// Inverse-variance weighted circular mean of arg psi over valid bins with
/// |psi|^2 > weight_threshold * peak. Parameter "phase" in (-pi, pi].
FitResult fit_constant_phase(const ReconstructedTpwf& recon, double weight_threshold = 0.1);

struct VisibilitySample {
    double phi = 0.0;
    double g2 = 0.0;
    double sigma = 0.0;
};

/// Weighted linear least squares of g2(phi) = A + Bc cos 2phi + Bs sin 2phi.
/// Parameters: A, B_cos, B_sin, B (= |Bc + i Bs|), visibility (= B / A),
/// phi_max, phi_min (in [0, pi)). Throws DataError on fewer than 3 distinct
/// phases or a singular design.
FitResult fit_visibility(std::span<const VisibilitySample> points);

}  // namespace biphoton
