#include "biphoton/fit.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <Eigen/Dense>

namespace biphoton {

const FitParameter& FitResult::param(std::string_view name) const {
    for (const auto& p : params) {
        if (p.name == name) return p;
    }
    throw std::out_of_range("FitResult: no parameter named " + std::string(name));
}

double FitResult::reduced_chi2() const {
    return ndof > 0 ? chi2 / ndof : std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> FitResult::pulls() const {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = (data[i] - fitted[i]) / sigma[i];
    return out;
}

namespace double_exponential {

double intensity(double tau, const std::array<double, 3>& p) {
    return p[0] * p[0] * std::exp(-2.0 * std::abs(tau - p[1]) / p[2]);
}

std::array<double, 3> gradient(double tau, const std::array<double, 3>& p) {
    const double d = tau - p[1];
    const double e = std::exp(-2.0 * std::abs(d) / p[2]);
    const double f = p[0] * p[0] * e;
    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    return {2.0 * p[0] * e, f * 2.0 * sign / p[2], f * 2.0 * std::abs(d) / (p[2] * p[2])};
}

double chi2(std::span<const double> x, std::span<const double> d, std::span<const double> s,
            const std::array<double, 3>& p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = (d[i] - intensity(x[i], p)) / s[i];
        sum += r * r;
    }
    return sum;
}

std::array<double, 3> chi2_gradient(std::span<const double> x, std::span<const double> d,
                                    std::span<const double> s, const std::array<double, 3>& p) {
    std::array<double, 3> g{};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = (d[i] - intensity(x[i], p)) / s[i];
        const auto df = gradient(x[i], p);
        for (int j = 0; j < 3; ++j) g[j] += -2.0 * r * df[j] / s[i];
    }
    return g;
}

}  // namespace double_exponential

namespace {

constexpr int kReweightPasses = 4;

struct Series {
    std::vector<double> x, d, s;
};

// Levenberg-Marquardt on the double exponential in rescaled time units.
// `free` selects which of (A, tau0, Tc) move.
struct LmOutcome {
    std::array<double, 3> p{};
    Eigen::MatrixXd covariance;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

LmOutcome levenberg_marquardt(const Series& data, std::array<double, 3> p, const std::array<bool, 3>& free) {
    std::vector<int> index;
    for (int j = 0; j < 3; ++j) {
        if (free[j]) index.push_back(j);
    }
    const int m = static_cast<int>(index.size());
    const int n = static_cast<int>(data.x.size());

    auto build = [&](const std::array<double, 3>& q, Eigen::MatrixXd& jac, Eigen::VectorXd& res) {
        jac.resize(n, m);
        res.resize(n);
        for (int i = 0; i < n; ++i) {
            res(i) = (data.d[i] - double_exponential::intensity(data.x[i], q)) / data.s[i];
            const auto g = double_exponential::gradient(data.x[i], q);
            for (int j = 0; j < m; ++j) jac(i, j) = g[index[j]] / data.s[i];
        }
    };

    LmOutcome out;
    double lambda = 1e-3;
    Eigen::MatrixXd jac;
    Eigen::VectorXd res;
    build(p, jac, res);
    double chi2 = res.squaredNorm();
    constexpr int kMaxIterations = 500;
    for (int it = 1; it <= kMaxIterations; ++it) {
        out.iterations = it;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * res;
        bool improved = false;
        double relative_step = 0.0;
        while (lambda < 1e12) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
            const Eigen::VectorXd step = damped.ldlt().solve(jtr);
            auto trial = p;
            for (int j = 0; j < m; ++j) trial[index[j]] += step(j);
            if (trial[2] <= 0.0) {
                lambda *= 10.0;
                continue;
            }
            Eigen::MatrixXd jac_trial;
            Eigen::VectorXd res_trial;
            build(trial, jac_trial, res_trial);
            const double chi2_trial = res_trial.squaredNorm();
            if (std::isfinite(chi2_trial) && chi2_trial <= chi2) {
                relative_step = 0.0;
                for (int j = 0; j < m; ++j) {
                    relative_step = std::max(relative_step, std::abs(step(j)) / (std::abs(p[index[j]]) + 1e-12));
                }
                const double decrease = chi2 - chi2_trial;
                p = trial;
                jac = std::move(jac_trial);
                res = std::move(res_trial);
                chi2 = chi2_trial;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (decrease <= 1e-14 * (chi2 + 1e-300) || chi2 < 1e-28) out.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            // No downhill step at any damping: a minimum to working precision.
            out.converged = true;
            break;
        }
        if (out.converged || relative_step < 1e-13) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged) out.message = "iteration budget exhausted";

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    out.covariance = jtj.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    out.p = p;
    return out;
}

}  // namespace

FitResult fit_double_exponential(const ReconstructedTpwf& recon, std::optional<double> fix_corr_time) {
    // Work in units of the bin width so all parameters are of order one.
    const double unit = recon.bin_width > 0.0 ? recon.bin_width : 1e-9;
    Series data;
    // Per-bin pieces of Var|psi|^2 = 4 f s_dir^2 + 2 (s_re^4 + s_im^4), where
    // s_dir^2 is the component variance along the measured phase direction.
    std::vector<double> dir_var, floor_var;
    for (const auto& bin : recon.bins) {
        if (!bin.valid() || !std::isfinite(bin.sigma_abs2) || !(bin.sigma_abs2 > 0.0)) continue;
        const bool components = std::isfinite(bin.sigma_re) && std::isfinite(bin.sigma_im) &&
                                (bin.sigma_re > 0.0 || bin.sigma_im > 0.0);
        const double a = bin.arg(), c = std::cos(a), sn = std::sin(a);
        const double vr = components ? bin.sigma_re * bin.sigma_re : 0.0;
        const double vi = components ? bin.sigma_im * bin.sigma_im : 0.0;
        data.x.push_back(bin.tau / unit);
        // |psi|^2 from noisy components is biased up by their variance.
        data.d.push_back(bin.abs2() - vr - vi);
        data.s.push_back(bin.sigma_abs2);
        dir_var.push_back(components ? c * c * vr + sn * sn * vi : 0.0);
        floor_var.push_back(components ? 2.0 * (vr * vr + vi * vi) : 0.0);
    }
    if (data.x.size() < 8) {
        throw DataError("fit_double_exponential: need at least 8 valid bins, have " + std::to_string(data.x.size()));
    }
    if (fix_corr_time && !(*fix_corr_time > 0.0)) throw ConfigError("fixed corr_time must be positive");

    // Initial guess: amplitude from the peak, offset from the weighted
    // centroid, decay time from the second moment (<d^2> = Tc^2 / 2).
    const auto peak = std::max_element(data.d.begin(), data.d.end());
    double w_sum = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
        const double w = std::max(data.d[i], 0.0);
        w_sum += w;
        m1 += w * data.x[i];
    }
    const double centroid = w_sum > 0.0 ? m1 / w_sum : data.x[peak - data.d.begin()];
    double m2 = 0.0;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
        m2 += std::max(data.d[i], 0.0) * (data.x[i] - centroid) * (data.x[i] - centroid);
    }
    const double spread = w_sum > 0.0 ? std::sqrt(2.0 * m2 / w_sum) : 1.0;
    std::array<double, 3> p = {std::sqrt(std::max(*peak, 1e-300)), centroid,
                               fix_corr_time ? *fix_corr_time / unit : std::max(spread, 0.5)};
    const std::array<bool, 3> free = {true, true, !fix_corr_time.has_value()};

    LmOutcome lm = levenberg_marquardt(data, p, free);
    // Errors propagated from the measured |psi| shrink on downward
    // fluctuations and pull the fit narrow. Re-evaluate them at the model
    // value and refit until the weights settle.
    for (int pass = 0; pass < kReweightPasses && lm.converged; ++pass) {
        bool changed = false;
        for (std::size_t i = 0; i < data.x.size(); ++i) {
            if (!(dir_var[i] > 0.0 || floor_var[i] > 0.0)) continue;
            const double f = std::max(double_exponential::intensity(data.x[i], lm.p), 0.0);
            const double s = std::sqrt(4.0 * f * dir_var[i] + floor_var[i]);
            if (!(s > 0.0)) continue;
            changed = changed || std::abs(s - data.s[i]) > 1e-9 * data.s[i];
            data.s[i] = s;
        }
        if (!changed) break;
        lm = levenberg_marquardt(data, lm.p, free);
    }

    FitResult result;
    result.model = "double_exponential";
    result.converged = lm.converged;
    result.iterations = lm.iterations;
    result.message = lm.message;
    const int n_free = fix_corr_time ? 2 : 3;
    result.ndof = static_cast<int>(data.x.size()) - n_free;
    result.chi2 = double_exponential::chi2(data.x, data.d, data.s, lm.p);

    const auto sd = [&](int j) { return std::sqrt(std::max(lm.covariance(j, j), 0.0)); };
    result.params.push_back({"amplitude", std::abs(lm.p[0]), sd(0), false});
    result.params.push_back({"tau_offset", lm.p[1] * unit, sd(1) * unit, false});
    const double tc_sigma = fix_corr_time ? 0.0 : sd(2) * unit;
    result.params.push_back({"corr_time", lm.p[2] * unit, tc_sigma, fix_corr_time.has_value()});
    result.params.push_back({"fwhm", corr_time_to_intensity_fwhm(lm.p[2] * unit),
                             corr_time_to_intensity_fwhm(tc_sigma), fix_corr_time.has_value()});

    for (std::size_t i = 0; i < data.x.size(); ++i) {
        result.x.push_back(data.x[i] * unit);
        result.data.push_back(data.d[i]);
        result.sigma.push_back(data.s[i]);
        result.fitted.push_back(double_exponential::intensity(data.x[i], lm.p));
    }
    return result;
}

FitResult fit_constant_phase(const ReconstructedTpwf& recon, double weight_threshold) {
    double peak = 0.0;
    for (const auto& bin : recon.bins) {
        if (bin.valid()) peak = std::max(peak, bin.abs2());
    }
    FitResult result;
    result.model = "constant_phase";
    std::complex<double> resultant = 0.0;
    double weight_sum = 0.0;
    for (const auto& bin : recon.bins) {
        if (!bin.valid() || !(bin.abs2() > weight_threshold * peak)) continue;
        if (!std::isfinite(bin.sigma_arg) || !(bin.sigma_arg > 0.0)) continue;
        const double w = 1.0 / (bin.sigma_arg * bin.sigma_arg);
        resultant += w * std::polar(1.0, bin.arg());
        weight_sum += w;
        result.x.push_back(bin.tau);
        result.data.push_back(bin.arg());
        result.sigma.push_back(bin.sigma_arg);
    }
    if (result.x.empty()) throw DataError("fit_constant_phase: no bins above the amplitude threshold");

    const double phase = std::arg(resultant);
    result.params.push_back({"phase", phase, 1.0 / std::sqrt(weight_sum), false});
    for (std::size_t i = 0; i < result.x.size(); ++i) {
        // Residuals are taken on the circle; store data unwrapped around the mean.
        result.data[i] = phase + std::remainder(result.data[i] - phase, 2.0 * kPi);
        result.fitted.push_back(phase);
        const double r = (result.data[i] - phase) / result.sigma[i];
        result.chi2 += r * r;
    }
    result.ndof = static_cast<int>(result.x.size()) - 1;
    result.converged = true;
    return result;
}

FitResult fit_visibility(std::span<const VisibilitySample> points) {
    std::vector<double> phis;
    for (const auto& pt : points) {
        if (!(pt.sigma > 0.0) || !std::isfinite(pt.sigma)) {
            throw DataError("fit_visibility: every point needs a positive finite sigma");
        }
        phis.push_back(pt.phi);
    }
    std::sort(phis.begin(), phis.end());
    const auto distinct = std::unique(phis.begin(), phis.end()) - phis.begin();
    if (distinct < 3) throw DataError("fit_visibility: need at least 3 distinct phases");

    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& pt = points[static_cast<std::size_t>(i)];
        design(i, 0) = 1.0 / pt.sigma;
        design(i, 1) = std::cos(2.0 * pt.phi) / pt.sigma;
        design(i, 2) = std::sin(2.0 * pt.phi) / pt.sigma;
        rhs(i) = pt.g2 / pt.sigma;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < 3) throw DataError("fit_visibility: degenerate design matrix");
    const Eigen::Vector3d coef = qr.solve(rhs);
    const Eigen::Matrix3d cov = (design.transpose() * design).inverse();

    const double a = coef(0), c = coef(1), s = coef(2);
    const double amp = std::hypot(c, s);
    FitResult result;
    result.model = "visibility";
    result.converged = true;
    result.iterations = 1;
    result.ndof = static_cast<int>(n) - 3;

    const auto var = [&](const Eigen::Vector3d& grad) { return std::sqrt(std::max(grad.dot(cov * grad), 0.0)); };
    result.params.push_back({"A", a, std::sqrt(cov(0, 0)), false});
    result.params.push_back({"B_cos", c, std::sqrt(cov(1, 1)), false});
    result.params.push_back({"B_sin", s, std::sqrt(cov(2, 2)), false});
    const double amp_safe = amp > 0.0 ? amp : 1.0;
    result.params.push_back({"B", amp, var(Eigen::Vector3d(0.0, c / amp_safe, s / amp_safe)), false});
    result.params.push_back({"visibility", amp / a,
                             var(Eigen::Vector3d(-amp / (a * a), c / (amp_safe * a), s / (amp_safe * a))), false});
    // g2 = A + B cos(2 phi - delta): maximum at delta/2, minimum a quarter period later.
    const double delta = std::atan2(s, c);
    const double amp2 = amp_safe * amp_safe;
    const double sigma_phi = 0.5 * var(Eigen::Vector3d(0.0, -s / amp2, c / amp2));
    const auto wrap_half_period = [](double phi) {
        const double w = std::fmod(phi, kPi);
        return w < 0.0 ? w + kPi : w;
    };
    result.params.push_back({"phi_max", wrap_half_period(delta / 2.0), sigma_phi, false});
    result.params.push_back({"phi_min", wrap_half_period(delta / 2.0 + kPi / 2.0), sigma_phi, false});

    for (const auto& pt : points) {
        const double model = a + c * std::cos(2.0 * pt.phi) + s * std::sin(2.0 * pt.phi);
        result.x.push_back(pt.phi);
        result.data.push_back(pt.g2);
        result.sigma.push_back(pt.sigma);
        result.fitted.push_back(model);
        const double r = (pt.g2 - model) / pt.sigma;
        result.chi2 += r * r;
    }
    return result;
}

}  // namespace biphoton
