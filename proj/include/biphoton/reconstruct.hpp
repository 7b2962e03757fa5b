#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biphoton/correlate.hpp"

namespace biphoton {

// Analytic three-setting inversion. With the balanced analyzer at
// phi_k = k*pi/3 the measured rates are
//
//     y_k = gamma^2 + |psi|^2 - 2 gamma Re(psi e^{2 i phi_k})
//
// which inverts in closed form, bin by bin:
//
//     ybar   = (y0 + y1 + y2) / 3
//     psi    = (ybar - y0) / (2 gamma) + i (y1 - y2) / (2 sqrt(3) gamma)
//     gamma  = sqrt( (ybar + sqrt(3 ybar^2 - 2/3 (y0^2 + y1^2 + y2^2))) / 2 )
//
// The inner radicand equals (gamma^2 - |psi|^2)^2, so the '+' root is the
// solution with gamma >= |psi|; the '-' root is the mirror solution.

enum class BinStatus : std::uint8_t {
    ok,
    negative_radicand,  ///< 3 ybar^2 - 2/3 sum y^2 below -1e-9 ybar^2
    zero_gamma,         ///< reference amplitude vanishes; psi undefined
    no_counts,          ///< a setting recorded no coincidences in this bin
};

std::string to_string(BinStatus status);

enum class RootChoice : std::uint8_t { larger, smaller };

/// Differences that carry all of psi's information: (ybar - y0) and
/// (y1 - y2). Both are unchanged by a common offset of the y_k; the first is
/// evaluated as ((y1 - y0) + (y2 - y0)) / 3 so that the invariance also holds
/// bit-for-bit whenever the offset sums are exact.
struct TomographyNumerators {
    double mean_minus_y0 = 0.0;
    double y1_minus_y2 = 0.0;
};

TomographyNumerators tomography_numerators(double y0, double y1, double y2);

/// Radicand ybar^2 - 2/3 sum (y_k - ybar)^2, algebraically equal to
/// 3 ybar^2 - 2/3 sum y_k^2 but without the cancellation of the raw form.
double tomography_radicand(double y0, double y1, double y2);

struct BinEstimate {
    double re_psi = 0.0;
    double im_psi = 0.0;
    double gamma = 0.0;
    double radicand = 0.0;
    BinStatus status = BinStatus::ok;

    bool ok() const { return status == BinStatus::ok; }
};

BinEstimate reconstruct_bin(double y0, double y1, double y2, RootChoice root = RootChoice::larger);

/// psi from the numerators with an externally supplied gamma.
BinEstimate reconstruct_bin_fixed_gamma(double y0, double y1, double y2, double gamma);

/// First-order 1-sigma uncertainties of the per-bin estimates.
struct BinUncertainty {
    double sigma_re = 0.0;
    double sigma_im = 0.0;
    double sigma_gamma = 0.0;
    double sigma_abs2 = 0.0;   ///< of |psi|^2
    double sigma_arg = 0.0;    ///< of arg psi, radians
    double sigma_gap = 0.0;    ///< of gamma^2 - |psi|^2 (root separation)
    bool finite = true;
};

/// Propagates sigma_{y_k} = y_k / sqrt(counts_k) (Poisson) through the
/// inversion via a central-difference Jacobian, step 1e-6 * ybar. Any zero
/// count yields infinite sigmas with finite = false.
BinUncertainty propagate_errors(const std::array<double, 3>& y, const std::array<std::uint64_t, 3>& counts,
                                RootChoice root = RootChoice::larger);

/// Same with explicit sigma_{y_k}. When `fixed_gamma` is given, gamma is
/// held constant and sigma_gamma is reported as zero.
BinUncertainty propagate_errors_sigma(const std::array<double, 3>& y, const std::array<double, 3>& sigma_y,
                                      std::optional<double> fixed_gamma = std::nullopt,
                                      RootChoice root = RootChoice::larger);

/// Histograms at phi = 0, pi/3, 2pi/3 (balanced analyzer) with identical binning.
struct PhaseTriple {
    std::array<CoincidenceHistogram, 3> settings;

    /// Throws DataError on mismatched binning or analyzer metadata.
    void validate() const;
};

enum class BackgroundMode : std::uint8_t { none, wing_subtract };
enum class GammaMode : std::uint8_t { per_bin, pooled };

std::string to_string(BackgroundMode mode);
std::string to_string(GammaMode mode);
BackgroundMode parse_background_mode(const std::string& text);
GammaMode parse_gamma_mode(const std::string& text);

struct ReconstructionOptions {
    BackgroundMode background_mode = BackgroundMode::none;
    GammaMode gamma_mode = GammaMode::per_bin;
    double wing_fraction = 0.2;
    RootChoice root = RootChoice::larger;
};

struct ReconstructedBin {
    double tau = 0.0;
    std::array<double, 3> y{};  ///< normalized g2 after any background subtraction
    double re_psi = 0.0;
    double im_psi = 0.0;
    double gamma = 0.0;
    double sigma_re = 0.0;
    double sigma_im = 0.0;
    double sigma_gamma = 0.0;
    double sigma_abs2 = 0.0;
    double sigma_arg = 0.0;
    double radicand = 0.0;
    BinStatus status = BinStatus::ok;
    /// gamma^2 - |psi|^2 is within 2 sigma of zero: the data cannot tell the
    /// two roots apart here.
    bool root_ambiguous = false;

    bool valid() const { return status == BinStatus::ok; }
    double abs2() const { return re_psi * re_psi + im_psi * im_psi; }
    double arg() const { return std::atan2(im_psi, re_psi); }
};

struct ReconstructedTpwf {
    double bin_width = 0.0;
    ReconstructionOptions options;
    std::vector<ReconstructedBin> bins;
    /// Subtracted constant (0 for BackgroundMode::none) and its sigma.
    double background = 0.0;
    double sigma_background = 0.0;
    /// Mean wing level of the normalized g2 (gamma^2 + background).
    double wing_level = 0.0;
    /// Pooled gamma (GammaMode::pooled) or NaN.
    double pooled_gamma = std::numeric_limits<double>::quiet_NaN();
    double sigma_pooled_gamma = std::numeric_limits<double>::quiet_NaN();

    std::size_t valid_count() const;
};

struct BackgroundEstimate {
    double level = 0.0;
    double sigma = 0.0;
};

/// Mean normalized g2 over the outermost `wing_fraction` of bins on each
/// side. Far from the peak this level is gamma^2 + B, not B alone. Throws
/// ConfigError for wing_fraction outside (0, 0.4] and DataError when a wing
/// has fewer than 5 bins.
BackgroundEstimate background_estimate(const CoincidenceHistogram& hist, double wing_fraction);

/// Per-bin inversion of a phase triple. Throws NumericalError when more
/// than half of the bins are invalid.
ReconstructedTpwf reconstruct_curve(const PhaseTriple& triple, const ReconstructionOptions& options = {});

namespace kernels {

/// Serial and OpenMP loops over bins: reconstruct and propagate errors for
/// each (y, sigma_y) triple. Both produce identical output.
void reconstruct_bins_serial(std::span<ReconstructedBin> bins, std::span<const std::array<double, 3>> sigma_y,
                             std::span<const std::array<std::uint64_t, 3>> counts, RootChoice root);
void reconstruct_bins_parallel(std::span<ReconstructedBin> bins, std::span<const std::array<double, 3>> sigma_y,
                               std::span<const std::array<std::uint64_t, 3>> counts, RootChoice root);

}  // namespace kernels

}  // namespace biphoton
