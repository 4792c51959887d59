#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "error.hpp"

namespace si::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error below 1.2e-9) followed by
/// one Halley step against erfc, which brings the result to near machine
/// precision.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("normal_quantile: p must lie in (0, 1)");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw InputError("mean of empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Unbiased sample variance; zero for a single observation.
inline double variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double median(std::span<const double> xs) {
    if (xs.empty()) throw InputError("median of empty sample");
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_abs(std::span<const double> xs) {
    if (xs.empty()) throw InputError("mean of empty sample");
    double s = 0.0;
    for (double x : xs) s += std::abs(x);
    return s / static_cast<double>(xs.size());
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `xs` and N(mu, sd^2).
inline double ks_distance_normal(std::span<const double> xs, double mu = 0.0, double sd = 1.0) {
    if (xs.empty()) throw InputError("ks distance of empty sample");
    if (!(sd > 0.0)) throw InputError("ks distance needs sd > 0");
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double dist = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double f = normal_cdf((v[i] - mu) / sd);
        dist = std::max({dist, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return dist;
}

/// Least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InputError("ols_slope needs two equal-length samples of size >= 2");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw InputError("ols_slope: x has zero spread");
    return sxy / sxx;
}

/// Running median over windows of three; the end points use their two-element window.
inline std::vector<double> median3(std::span<const double> xs) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const std::size_t lo = i == 0 ? 0 : i - 1;
        const std::size_t hi = std::min(xs.size(), i + 2);
        out[i] = median(xs.subspan(lo, hi - lo));
    }
    return out;
}

}  // namespace si::stats
