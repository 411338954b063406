#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <vector>

namespace stablab {

/// Full (both halves) Gauss-Legendre rule on [-1, 1].
struct Rule {
    std::vector<double> x, w;
};

template <unsigned N>
const Rule& gauss_legendre() {
    static const Rule rule = [] {
        using G = boost::math::quadrature::gauss<double, N>;
        Rule r;
        const auto& a = G::abscissa();
        const auto& w = G::weights();
        for (std::size_t i = a.size(); i-- > 0;) {
            if (a[i] == 0.0) continue;
            r.x.push_back(-a[i]);
            r.w.push_back(w[i]);
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            r.x.push_back(a[i]);
            r.w.push_back(w[i]);
        }
        return r;
    }();
    return rule;
}

/// Composite Gauss-Legendre on [a,b] split into `panels` equal pieces.
template <unsigned N = 8, class F>
double composite_gl(F&& f, double a, double b, int panels) {
    const Rule& r = gauss_legendre<N>();
    const double H = (b - a) / panels;
    double s = 0;
    for (int p = 0; p < panels; ++p) {
        const double c = a + (p + 0.5) * H, hh = 0.5 * H;
        for (std::size_t i = 0; i < r.x.size(); ++i) s += r.w[i] * f(c + hh * r.x[i]);
    }
    return s * 0.5 * H;
}

/// Adaptive Gauss-Kronrod for one-time tabulations.
template <class F>
double adaptive(F&& f, double a, double b, double tol = 1e-13) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, tol);
}

/// Composite Simpson on uniformly spaced samples (odd count).
inline double simpson(const std::vector<double>& y, double h) {
    const std::size_t n = y.size();
    if (n < 3) return n == 2 ? 0.5 * h * (y[0] + y[1]) : 0.0;
    double s = y.front() + y.back();
    std::size_t last = (n % 2 == 1) ? n - 1 : n - 2;
    for (std::size_t i = 1; i < last; ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
    if (n % 2 == 1) return s * h / 3;
    // even count: Simpson up to n-2, trapezoid on the final interval
    s = y[0] + y[last];
    for (std::size_t i = 1; i < last; ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
    return s * h / 3 + 0.5 * h * (y[last] + y[n - 1]);
}

}  // namespace stablab
