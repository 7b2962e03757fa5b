#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "biphoton/reconstruct.hpp"
#include "biphoton/simulate.hpp"
#include "stats.hpp"

using namespace biphoton;

namespace {

constexpr double ns = 1e-9;
const double kTc = 1.0 / (kPi * 8.1e6);

std::array<double, 3> forward3(double gamma, Complex psi, double offset = 0.0) {
    std::array<double, 3> y{};
    for (std::size_t k = 0; k < 3; ++k) {
        y[k] = forward_g2(AnalyzerSetting::balanced(kTomographyPhases[k]), {gamma}, psi, offset);
    }
    return y;
}

// Histograms whose normalized g2 equals y(tau_center) up to count rounding:
// equal singles, scale T / (N^2 dt) = `scale`.
PhaseTriple noiseless_triple(const std::function<std::array<double, 3>(double)>& y_of_tau,
                             double scale = 1e-12) {
    PhaseTriple t;
    for (std::size_t k = 0; k < 3; ++k) {
        auto& h = t.settings[k];
        h.bin_width = 4 * ns;
        h.tau_max = 200 * ns;
        h.tau_min = -200 * ns;
        h.singles_a = 1'000'000'000;
        h.singles_b = 1'000'000'000;
        h.acquisition_time = scale * 1e18 * h.bin_width;
        h.setting = AnalyzerSetting::balanced(kTomographyPhases[k]);
        h.counts.resize(100);
        for (std::size_t i = 0; i < 100; ++i) {
            h.counts[i] = static_cast<std::uint64_t>(std::llround(y_of_tau(h.bin_center(i))[k] / scale));
        }
    }
    return t;
}

const TpwfModel kModel{0.8, kTc, 3 * ns, 0.9};

}  // namespace

TEST(ReconstructBin, Examples) {
    auto e = reconstruct_bin(1, 1, 1);
    EXPECT_TRUE(e.ok());
    EXPECT_DOUBLE_EQ(e.gamma, 1.0);
    EXPECT_EQ(e.re_psi, 0.0);
    EXPECT_EQ(e.im_psi, 0.0);

    e = reconstruct_bin(0.25, 1.75, 1.75);
    EXPECT_NEAR(e.re_psi, 0.5, 1e-15);
    EXPECT_NEAR(e.im_psi, 0.0, 1e-15);
    EXPECT_NEAR(e.gamma, 1.0, 1e-15);
    EXPECT_NEAR(e.radicand, 0.5625, 1e-15);

    e = reconstruct_bin(1.25, 2.116, 0.384);
    EXPECT_NEAR(e.re_psi, 0.0, 1e-3);
    EXPECT_NEAR(e.im_psi, 0.5, 1e-3);
    EXPECT_NEAR(e.gamma, 1.0, 1e-3);
    e = reconstruct_bin(1.25, 2.1160254037844393, 0.38397459621556157);
    EXPECT_NEAR(e.im_psi, 0.5, 1e-15);
    EXPECT_NEAR(e.gamma, 1.0, 1e-15);
}

TEST(ReconstructBin, InvalidInputsAreFlagged) {
    EXPECT_EQ(reconstruct_bin(0, 0, 0).status, BinStatus::zero_gamma);
    EXPECT_EQ(reconstruct_bin(-1, -1, -1).status, BinStatus::zero_gamma);
    // Fully modulated triple beyond any (gamma, psi): radicand < 0.
    const auto e = reconstruct_bin(0.0, 0.0, 3.0);
    EXPECT_EQ(e.status, BinStatus::negative_radicand);
    EXPECT_LT(e.radicand, 0.0);
    EXPECT_FALSE(e.ok());
    EXPECT_EQ(reconstruct_bin_fixed_gamma(1, 1, 1, 0.0).status, BinStatus::zero_gamma);
    EXPECT_EQ(reconstruct_bin_fixed_gamma(1, 1, 1, NAN).status, BinStatus::zero_gamma);
    EXPECT_EQ(to_string(BinStatus::negative_radicand), "negative_radicand");
}

TEST(ReconstructBin, RadicandFormsAgree) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        const double y0 = u(rng), y1 = u(rng), y2 = u(rng);
        const double raw = 3.0 * std::pow((y0 + y1 + y2) / 3.0, 2) - 2.0 / 3.0 * (y0 * y0 + y1 * y1 + y2 * y2);
        EXPECT_NEAR(tomography_radicand(y0, y1, y2), raw, 1e-13);
    }
}

TEST(ReconstructBin, InvertsForwardModel) {
    // Errors scale like eps / (1 - |psi|^2 / gamma^2); the margin keeps the
    // conditioning factor below about 2e3.
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double gamma = 0.01 + 2.0 * u(rng);
        const Complex psi = std::polar(0.999 * gamma * u(rng), 2.0 * kPi * u(rng));
        const auto y = forward3(gamma, psi);
        const auto e = reconstruct_bin(y[0], y[1], y[2]);
        ASSERT_TRUE(e.ok());
        worst = std::max({worst, std::abs(e.gamma - gamma) / gamma, std::abs(e.re_psi - psi.real()) / gamma,
                          std::abs(e.im_psi - psi.imag()) / gamma});
        // ybar identity
        const double ybar = (y[0] + y[1] + y[2]) / 3.0;
        ASSERT_NEAR(e.gamma * e.gamma + e.re_psi * e.re_psi + e.im_psi * e.im_psi, ybar, 1e-12 * ybar);
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(ReconstructBin, SmallerRootIsTheMirrorSolution) {
    // With gamma < |psi| the larger root returns the swapped magnitudes;
    // the smaller root recovers the inputs.
    const double gamma = 0.4;
    const Complex psi = std::polar(0.9, 0.3);
    const auto y = forward3(gamma, psi);
    const auto small = reconstruct_bin(y[0], y[1], y[2], RootChoice::smaller);
    EXPECT_NEAR(small.gamma, gamma, 1e-12);
    EXPECT_NEAR(small.re_psi, psi.real(), 1e-12);
    EXPECT_NEAR(small.im_psi, psi.imag(), 1e-12);
    const auto large = reconstruct_bin(y[0], y[1], y[2]);
    EXPECT_NEAR(large.gamma, std::abs(psi), 1e-12);
    EXPECT_NEAR(std::atan2(large.im_psi, large.re_psi), 0.3, 1e-12);
}

TEST(ReconstructBin, RootBoundaryIsContinuous) {
    const Complex psi = std::polar(0.7, -1.1);
    for (double eps : {1e-2, 1e-4, 1e-6, 0.0}) {
        const double gamma = 0.7 * (1.0 + eps);
        const auto y = forward3(gamma, psi);
        for (auto root : {RootChoice::larger, RootChoice::smaller}) {
            const auto e = reconstruct_bin(y[0], y[1], y[2], root);
            ASSERT_TRUE(e.ok());
            // Both roots meet at gamma = |psi|; the radicand's rounding
            // contributes sqrt(eps_machine) at the boundary itself.
            EXPECT_NEAR(e.gamma, 0.7, 0.7 * eps + 1e-7);
        }
    }
}

TEST(ReconstructBin, ScaleCovariance) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double gamma = 0.1 + u(rng);
        const auto y = forward3(gamma, std::polar(0.9 * gamma * u(rng), 2 * kPi * u(rng)));
        const double s = std::exp(6.0 * (u(rng) - 0.5));
        const auto a = reconstruct_bin(y[0], y[1], y[2]);
        const auto b = reconstruct_bin(s * y[0], s * y[1], s * y[2]);
        const double r = std::sqrt(s);
        EXPECT_NEAR(b.gamma, r * a.gamma, 1e-12 * r * a.gamma);
        EXPECT_NEAR(b.re_psi, r * a.re_psi, 1e-12 * r * a.gamma);
        EXPECT_NEAR(b.im_psi, r * a.im_psi, 1e-12 * r * a.gamma);
        EXPECT_NEAR(std::atan2(b.im_psi, b.re_psi), std::atan2(a.im_psi, a.re_psi), 1e-12);
    }
}

TEST(Numerators, BitIdenticalUnderExactOffsets) {
    // Values on a 2^-20 grid: every sum and difference below is exact.
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::int64_t> counts(0, 1 << 22);
    const double q = std::ldexp(1.0, -20);
    for (int i = 0; i < 10000; ++i) {
        const double y0 = q * counts(rng), y1 = q * counts(rng), y2 = q * counts(rng);
        const double b = q * (counts(rng) - (1 << 21));
        const auto n = tomography_numerators(y0, y1, y2);
        const auto m = tomography_numerators(y0 + b, y1 + b, y2 + b);
        ASSERT_EQ(n.mean_minus_y0, m.mean_minus_y0);
        ASSERT_EQ(n.y1_minus_y2, m.y1_minus_y2);
    }
}

TEST(Numerators, ArbitraryOffsetsChangeOnlyRounding) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const auto y = forward3(1.0, std::polar(0.8 * u(rng), 2 * kPi * u(rng)));
        const double b = 10.0 * (u(rng) - 0.5);
        const auto n = tomography_numerators(y[0], y[1], y[2]);
        const auto m = tomography_numerators(y[0] + b, y[1] + b, y[2] + b);
        const double ulp = std::numeric_limits<double>::epsilon() * (std::abs(b) + 4.0);
        EXPECT_NEAR(n.mean_minus_y0, m.mean_minus_y0, 4 * ulp);
        EXPECT_NEAR(n.y1_minus_y2, m.y1_minus_y2, 4 * ulp);
    }
}

TEST(PropagateErrors, MatchesPoissonBootstrap) {
    // y_k = c_k * s with Poisson counts; resample the counts and invert.
    const double gamma = 1.0;
    const Complex psi = std::polar(0.6, 0.9);
    const auto y = forward3(gamma, psi);
    const double s = 1e-4;
    std::array<std::uint64_t, 3> counts{};
    std::array<double, 3> yq{};
    for (std::size_t k = 0; k < 3; ++k) {
        counts[k] = static_cast<std::uint64_t>(std::llround(y[k] / s));
        yq[k] = static_cast<double>(counts[k]) * s;
    }
    const auto unc = propagate_errors(yq, counts);
    ASSERT_TRUE(unc.finite);

    std::mt19937_64 rng(6);
    std::vector<double> re, im, g;
    for (int r = 0; r < 10000; ++r) {
        std::array<double, 3> yb{};
        for (std::size_t k = 0; k < 3; ++k) {
            std::poisson_distribution<std::uint64_t> pois(static_cast<double>(counts[k]));
            yb[k] = static_cast<double>(pois(rng)) * s;
        }
        const auto e = reconstruct_bin(yb[0], yb[1], yb[2]);
        ASSERT_TRUE(e.ok());
        re.push_back(e.re_psi);
        im.push_back(e.im_psi);
        g.push_back(e.gamma);
    }
    EXPECT_NEAR(test::stddev(re) / unc.sigma_re, 1.0, 0.1);
    EXPECT_NEAR(test::stddev(im) / unc.sigma_im, 1.0, 0.1);
    EXPECT_NEAR(test::stddev(g) / unc.sigma_gamma, 1.0, 0.1);
}

TEST(PropagateErrors, SymmetricPointHasEqualSigmas) {
    const auto unc = propagate_errors({1.0, 1.0, 1.0}, {10000, 10000, 10000});
    EXPECT_NEAR(unc.sigma_re / unc.sigma_im, 1.0, 0.05);
    // sigma_y^2 / 6 for each component at gamma = 1.
    EXPECT_NEAR(unc.sigma_re, 0.01 / std::sqrt(6.0), 1e-6);
}

TEST(PropagateErrors, ScalingAndZeroCounts) {
    const auto y = forward3(1.0, std::polar(0.5, 0.2));
    const auto a = propagate_errors(y, {1000, 1000, 1000});
    const auto b = propagate_errors(y, {4000, 4000, 4000});
    EXPECT_NEAR(b.sigma_re, a.sigma_re / 2.0, 1e-6 * a.sigma_re);
    EXPECT_NEAR(b.sigma_im, a.sigma_im / 2.0, 1e-6 * a.sigma_im);
    EXPECT_NEAR(b.sigma_gamma, a.sigma_gamma / 2.0, 1e-6 * a.sigma_gamma);
    const auto big = propagate_errors(y, {1'000'000'000'000, 1'000'000'000'000, 1'000'000'000'000});
    EXPECT_LT(big.sigma_re, 1e-5);

    const auto z = propagate_errors(y, {1000, 0, 1000});
    EXPECT_FALSE(z.finite);
    EXPECT_TRUE(std::isinf(z.sigma_re));
    EXPECT_TRUE(std::isinf(z.sigma_gamma));
}

TEST(PropagateErrors, FixedGammaReportsZeroGammaSigma) {
    const auto y = forward3(1.0, std::polar(0.5, 0.2));
    const auto u = propagate_errors_sigma(y, {0.01, 0.01, 0.01}, 1.0);
    EXPECT_EQ(u.sigma_gamma, 0.0);
    // Linear in y with gamma fixed: exact coefficient sums.
    EXPECT_NEAR(u.sigma_re, 0.01 * std::sqrt(6.0) / 6.0, 1e-9);
    EXPECT_NEAR(u.sigma_im, 0.01 * std::sqrt(2.0) / (2.0 * std::sqrt(3.0)), 1e-9);
    EXPECT_FALSE(propagate_errors_sigma(y, {0.01, -1.0, 0.01}).finite);
}

TEST(PhaseTriple, Validation) {
    auto t = noiseless_triple([](double) { return std::array<double, 3>{1, 1, 1}; });
    EXPECT_NO_THROW(t.validate());
    auto bad = t;
    bad.settings[1].setting.phi = 0.0;
    EXPECT_THROW(bad.validate(), DataError);
    bad = t;
    bad.settings[2].setting.theta = 0.3;
    EXPECT_THROW(bad.validate(), DataError);
    bad = t;
    bad.settings[2].bin_width = 2 * ns;
    bad.settings[2].counts.resize(200);
    EXPECT_THROW(bad.validate(), DataError);
    EXPECT_THROW(reconstruct_curve(bad), DataError);
}

TEST(ReconstructCurve, NoiselessRoundTrip) {
    const double gamma = 1.1;
    const auto t = noiseless_triple([&](double tau) { return forward3(gamma, tpwf_eval(kModel, tau)); });
    const auto r = reconstruct_curve(t);
    ASSERT_EQ(r.bins.size(), 100U);
    for (const auto& b : r.bins) {
        ASSERT_TRUE(b.valid());
        const Complex psi = tpwf_eval(kModel, b.tau);
        EXPECT_NEAR(b.re_psi, psi.real(), 1e-10);
        EXPECT_NEAR(b.im_psi, psi.imag(), 1e-10);
        EXPECT_NEAR(b.gamma, gamma, 1e-10);
        EXPECT_TRUE(std::isfinite(b.sigma_re));
    }
    EXPECT_EQ(r.valid_count(), 100U);
    EXPECT_TRUE(std::isnan(r.pooled_gamma));
}

TEST(ReconstructCurve, PooledGammaMatchesTruth) {
    const auto t = noiseless_triple([&](double tau) { return forward3(1.1, tpwf_eval(kModel, tau)); });
    ReconstructionOptions o;
    o.gamma_mode = GammaMode::pooled;
    const auto r = reconstruct_curve(t, o);
    EXPECT_NEAR(r.pooled_gamma, 1.1, 1e-10);
    for (const auto& b : r.bins) {
        EXPECT_EQ(b.gamma, r.pooled_gamma);
        EXPECT_NEAR(b.re_psi, tpwf_eval(kModel, b.tau).real(), 1e-10);
    }
}

TEST(ReconstructCurve, OffsetLeavesNumeratorsAndPhase) {
    const double gamma = 1.1;
    // A whole number of counts, so both triples round identically.
    const double offset = 0.375;
    const auto clean =
        reconstruct_curve(noiseless_triple([&](double tau) { return forward3(gamma, tpwf_eval(kModel, tau)); }));
    const auto shifted = reconstruct_curve(
        noiseless_triple([&](double tau) { return forward3(gamma, tpwf_eval(kModel, tau), offset); }));
    for (std::size_t i = 0; i < clean.bins.size(); ++i) {
        const auto& a = clean.bins[i];
        const auto& b = shifted.bins[i];
        EXPECT_NEAR(a.re_psi * a.gamma, b.re_psi * b.gamma, 1e-10);
        EXPECT_NEAR(a.im_psi * a.gamma, b.im_psi * b.gamma, 1e-10);
        EXPECT_NEAR(a.arg(), b.arg(), 1e-10);
    }
    // gamma itself absorbs the offset.
    EXPECT_GT(shifted.bins[0].gamma, clean.bins[0].gamma);
}

TEST(ReconstructCurve, WingSubtractRemovesOffset) {
    const double gamma = 1.0;
    const double offset = 0.3;
    ReconstructionOptions o;
    o.background_mode = BackgroundMode::wing_subtract;
    const auto r = reconstruct_curve(
        noiseless_triple([&](double tau) { return forward3(gamma, tpwf_eval(kModel, tau), offset); }), o);
    // The 120-200 ns wings still hold |psi|^2 ~ 4e-4, which leaks into both
    // the wing level and the peak-based gamma^2.
    EXPECT_NEAR(r.wing_level, gamma * gamma + offset, 1e-3);
    EXPECT_NEAR(r.background, offset, 3e-3);
    const auto& peak = r.bins[50];
    EXPECT_NEAR(std::sqrt(peak.abs2()), std::abs(tpwf_eval(kModel, peak.tau)), 2e-3);
}

TEST(ReconstructCurve, NoSignalGivesZeroPsi) {
    const auto r = reconstruct_curve(noiseless_triple([](double) { return std::array<double, 3>{0.81, 0.81, 0.81}; }));
    for (const auto& b : r.bins) {
        EXPECT_EQ(b.re_psi, 0.0);
        EXPECT_EQ(b.im_psi, 0.0);
        EXPECT_NEAR(b.gamma, 0.9, 1e-12);
    }
}

TEST(ReconstructCurve, TooManyInvalidBinsThrows) {
    auto t = noiseless_triple([&](double tau) { return forward3(1.0, tpwf_eval(kModel, tau)); });
    const auto saved = t.settings[1].counts;
    for (std::size_t i = 0; i < 51; ++i) t.settings[1].counts[i] = 0;
    EXPECT_THROW(reconstruct_curve(t), NumericalError);
    t.settings[1].counts[0] = saved[0];
    t.settings[1].counts[1] = saved[1];
    const auto r = reconstruct_curve(t);
    EXPECT_EQ(r.bins[5].status, BinStatus::no_counts);
    EXPECT_TRUE(std::isinf(r.bins[5].sigma_re));
}

TEST(ReconstructCurve, PullsAreStandardNormal) {
    // Rate-level data; truth is the inversion of the analytic mean counts.
    SimConfig c;
    c.pair_rate = 2000;
    c.singles_rate_a = 20000;
    c.singles_rate_b = 20000;
    c.duration = 600;
    const TpwfModel model{1.0, kTc, 0.0, 0.9};
    const ReferenceAmplitude g{1.0};
    std::vector<double> pulls;
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        c.seed = 1000 + rep;
        PhaseTriple t;
        for (std::size_t k = 0; k < 3; ++k) {
            t.settings[k] = rate_level_histogram(c, AnalyzerSetting::balanced(kTomographyPhases[k]), model, g,
                                                 kDefaultBinWidth, kDefaultTauMax, k);
        }
        const auto maps = shared_g2_normalization(t.settings);
        const auto r = reconstruct_curve(t);
        for (std::size_t i = 0; i < r.bins.size(); ++i) {
            const auto& b = r.bins[i];
            const auto truth = reconstruct_bin(maps[0](t.settings[0].expected[i]), maps[1](t.settings[1].expected[i]),
                                               maps[2](t.settings[2].expected[i]));
            pulls.push_back((b.re_psi - truth.re_psi) / b.sigma_re);
            pulls.push_back((b.im_psi - truth.im_psi) / b.sigma_im);
        }
    }
    ASSERT_EQ(pulls.size(), 10000U);
    EXPECT_GT(test::ks_normal_pvalue(pulls), 0.01);
}

TEST(ReconstructKernels, SerialEqualsParallel) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<ReconstructedBin> a(5000);
    std::vector<std::array<double, 3>> sig(a.size());
    std::vector<std::array<std::uint64_t, 3>> cnt(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i].y = {u(rng), u(rng), u(rng)};
        sig[i] = {0.01 * u(rng), 0.01 * u(rng), 0.01 * u(rng)};
        cnt[i] = {1 + i % 7, i % 11, 5};
    }
    auto b = a;
    kernels::reconstruct_bins_serial(a, sig, cnt, RootChoice::larger);
    kernels::reconstruct_bins_parallel(b, sig, cnt, RootChoice::larger);
    std::size_t valid = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].status, b[i].status);
        ASSERT_EQ(a[i].re_psi, b[i].re_psi);
        ASSERT_EQ(a[i].gamma, b[i].gamma);
        ASSERT_EQ(a[i].sigma_abs2, b[i].sigma_abs2);
        ASSERT_EQ(a[i].root_ambiguous, b[i].root_ambiguous);
        valid += a[i].valid();
    }
    EXPECT_GT(valid, 0U);
    EXPECT_LT(valid, a.size());
}

TEST(BackgroundEstimate, FlatLevel) {
    const auto t = noiseless_triple([](double) { return std::array<double, 3>{1.7, 1.7, 1.7}; });
    const auto b = background_estimate(t.settings[0], 0.2);
    EXPECT_NEAR(b.level, 1.7, 1e-12);
    // 40 wing bins of 1.7e12 counts each.
    EXPECT_NEAR(b.sigma, std::sqrt(40 * 1.7e12) * 1e-12 / 40, 1e-15);
}

TEST(BackgroundEstimate, PoissonFlatWithinSigma) {
    std::mt19937_64 rng(8);
    std::poisson_distribution<std::uint64_t> pois(400.0);
    auto t = noiseless_triple([](double) { return std::array<double, 3>{1, 1, 1}; });
    auto& h = t.settings[0];
    for (auto& n : h.counts) n = pois(rng);
    const auto b = background_estimate(h, 0.3);
    EXPECT_NEAR(b.level, 400e-12, 4.0 * b.sigma);
}

TEST(BackgroundEstimate, BiasGrowsWithWingFraction) {
    const auto t = noiseless_triple([](double tau) {
        const double v = 1.0 + std::norm(tpwf_eval(kModel, tau));
        return std::array<double, 3>{v, v, v};
    });
    double previous = 0.0;
    for (double f : {0.05, 0.1, 0.2, 0.3, 0.4}) {
        const double level = background_estimate(t.settings[0], f).level;
        EXPECT_GT(level, previous);
        previous = level;
    }
    EXPECT_NEAR(background_estimate(t.settings[0], 0.05).level, 1.0, 1e-3);
}

TEST(BackgroundEstimate, Errors) {
    const auto t = noiseless_triple([](double) { return std::array<double, 3>{1, 1, 1}; });
    EXPECT_THROW(background_estimate(t.settings[0], 0.0), ConfigError);
    EXPECT_THROW(background_estimate(t.settings[0], 0.41), ConfigError);
    EXPECT_THROW(background_estimate(t.settings[0], 0.04), DataError);
}

TEST(ReconstructionOptions, ParseModes) {
    EXPECT_EQ(parse_background_mode("wing_subtract"), BackgroundMode::wing_subtract);
    EXPECT_EQ(parse_gamma_mode("pooled"), GammaMode::pooled);
    EXPECT_THROW(parse_background_mode("auto"), ConfigError);
    EXPECT_THROW(parse_gamma_mode(""), ConfigError);
    EXPECT_EQ(to_string(GammaMode::per_bin), "per_bin");
}
