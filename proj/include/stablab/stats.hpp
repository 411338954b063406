#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "errors.hpp"

namespace stablab {

struct LineFit {
    double slope = 0, intercept = 0;
};

/// Ordinary least squares y = a + b x.
inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "least_squares: need >= 2 matching points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {b, (sy - b * sx) / n};
}

/// Slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] > 0 && y[i] > 0, "loglog_slope: values must be positive");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return least_squares(lx, ly).slope;
}

/// Two-sample Kolmogorov-Smirnov statistic (inputs are copied and sorted).
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// One-sample KS statistic against a continuous CDF.
inline double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double F = cdf(a[i]);
        d = std::max({d, std::abs(F - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - F)});
    }
    return d;
}

/// Asymptotic critical value c(level) sqrt((n+m)/(n m)); c(0.01) = 1.628.
inline double ks_critical(std::size_t n, std::size_t m, double level = 0.01) {
    const double c = std::sqrt(-0.5 * std::log(level / 2));
    return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

inline double ks_critical_one(std::size_t n, double level = 0.01) {
    return std::sqrt(-0.5 * std::log(level / 2)) / std::sqrt(static_cast<double>(n));
}

struct WinsorStats {
    double mean = 0, sigma = 0;
};

/// Mean and standard deviation after clipping to [-c, c], c the (1 - level) quantile of |x|.
/// A symmetric clip keeps the mean of a symmetric law at zero.
inline WinsorStats winsorized_stats(const std::vector<double>& x, double level = 0.01) {
    require(x.size() >= 2, "winsorized_stats: need at least two values");
    std::vector<double> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = std::abs(x[i]);
    const auto k = static_cast<std::size_t>((1 - level) * static_cast<double>(a.size() - 1));
    std::nth_element(a.begin(), a.begin() + static_cast<long>(k), a.end());
    const double c = a[k];
    WinsorStats w;
    for (double v : x) w.mean += std::clamp(v, -c, c);
    w.mean /= static_cast<double>(x.size());
    for (double v : x) w.sigma += std::pow(std::clamp(v, -c, c) - w.mean, 2);
    w.sigma = std::sqrt(w.sigma / static_cast<double>(x.size() - 1));
    return w;
}

}  // namespace stablab
