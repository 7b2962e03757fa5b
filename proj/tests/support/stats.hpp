#pragma once

// Small statistics helpers shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <vector>

namespace biphoton::test {

/// Upper-tail probability of chi-square with k degrees of freedom
/// (Wilson-Hilferty normal approximation; accurate to ~1e-3 for k >= 3).
inline double chi2_upper_tail(double x, double k) {
    const double h = 2.0 / (9.0 * k);
    const double z = (std::cbrt(x / k) - (1.0 - h)) / std::sqrt(h);
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// One-sample Kolmogorov-Smirnov test against the standard normal.
/// Returns the asymptotic p-value.
inline double ks_normal_pvalue(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = normal_cdf(x[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    const double t = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int j = 1; j <= 100; ++j) {
        p += 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * t * t);
    }
    return std::clamp(p, 0.0, 1.0);
}

inline double mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double stddev(const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace biphoton::test
