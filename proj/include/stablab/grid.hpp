#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace stablab {

using Point = std::array<double, 2>;  // second component unused when dim == 1

inline double norm(const Point& p, int dim) {
    return dim == 1 ? std::abs(p[0]) : std::hypot(p[0], p[1]);
}

/// Uniform grid on [-L, L)^d with N points per axis; x_j = -L + j h.
/// The right end is excluded so the grid is also a period of the torus of length 2L.
struct GridSpec {
    int dim = 1;
    double half_extent = 1.0;
    std::size_t n = 64;

    GridSpec() = default;
    GridSpec(int d, double L, std::size_t N) : dim(d), half_extent(L), n(N) { validate(); }

    void validate() const {
        require(dim == 1 || dim == 2, "grid: dim must be 1 or 2");
        require(half_extent > 0 && std::isfinite(half_extent), "grid: half_extent must be positive");
        require(n >= 64 && (n & (n - 1)) == 0, "grid: points per axis must be a power of two >= 64");
    }

    double spacing() const { return 2.0 * half_extent / static_cast<double>(n); }
    std::size_t size() const { return dim == 1 ? n : n * n; }
    double coord(std::size_t j) const { return -half_extent + static_cast<double>(j) * spacing(); }
    Point point(std::size_t idx) const {
        if (dim == 1) return {coord(idx), 0.0};
        return {coord(idx / n), coord(idx % n)};
    }
    double cell_volume() const { return dim == 1 ? spacing() : spacing() * spacing(); }
    /// Angular frequency of FFT index k (standard wrap-around ordering).
    double frequency(std::size_t k) const {
        const auto kk = static_cast<long>(k) - (k >= n / 2 ? static_cast<long>(n) : 0L);
        return M_PI * static_cast<double>(kk) / half_extent;
    }
    double nyquist() const { return M_PI / spacing(); }
};

using GridFunction = std::vector<double>;

template <class F>
GridFunction sample(const GridSpec& g, F&& f) {
    GridFunction out(g.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(g.point(i));
    return out;
}

inline double sup_norm(const GridFunction& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double trapezoid_sum(const GridSpec& g, const GridFunction& v) {
    // periodic trapezoid: every node carries the full cell weight
    double s = 0;
    for (double x : v) s += x;
    return s * g.cell_volume();
}

/// Wrap a coordinate into [-L, L).
inline double wrap(double x, double L) {
    const double P = 2 * L;
    double y = std::fmod(x + L, P);
    if (y < 0) y += P;
    return y - L;
}

/// Periodic 4-point cubic (Lagrange) interpolation of a 1-d grid function.
inline double interp_periodic_1d(const GridSpec& g, const double* v, double x) {
    const double h = g.spacing();
    const double s = (wrap(x, g.half_extent) + g.half_extent) / h;
    const auto n = static_cast<long>(g.n);
    long j = static_cast<long>(std::floor(s));
    const double u = s - static_cast<double>(j);
    auto at = [&](long k) { return v[((k % n) + n) % n]; };
    const double w0 = -u * (u - 1) * (u - 2) / 6, w1 = (u + 1) * (u - 1) * (u - 2) / 2;
    const double w2 = -(u + 1) * u * (u - 2) / 2, w3 = (u + 1) * u * (u - 1) / 6;
    return w0 * at(j - 1) + w1 * at(j) + w2 * at(j + 1) + w3 * at(j + 2);
}

/// Tensor-product cubic interpolation on a 2-d periodic grid (row index = first coordinate).
inline double interp_periodic_2d(const GridSpec& g, const double* v, const Point& x) {
    const double h = g.spacing();
    const auto n = static_cast<long>(g.n);
    double s[2], u[2];
    long j[2];
    for (int a = 0; a < 2; ++a) {
        s[a] = (wrap(x[a], g.half_extent) + g.half_extent) / h;
        j[a] = static_cast<long>(std::floor(s[a]));
        u[a] = s[a] - static_cast<double>(j[a]);
    }
    auto weights = [](double t, double* w) {
        w[0] = -t * (t - 1) * (t - 2) / 6;
        w[1] = (t + 1) * (t - 1) * (t - 2) / 2;
        w[2] = -(t + 1) * t * (t - 2) / 2;
        w[3] = (t + 1) * t * (t - 1) / 6;
    };
    double w0[4], w1[4];
    weights(u[0], w0);
    weights(u[1], w1);
    double acc = 0;
    for (int a = 0; a < 4; ++a) {
        const long r = (((j[0] + a - 1) % n) + n) % n;
        double row = 0;
        for (int b = 0; b < 4; ++b) {
            const long c = (((j[1] + b - 1) % n) + n) % n;
            row += w1[b] * v[r * n + c];
        }
        acc += w0[a] * row;
    }
    return acc;
}

inline double interp_periodic(const GridSpec& g, const GridFunction& v, const Point& x) {
    return g.dim == 1 ? interp_periodic_1d(g, v.data(), x[0]) : interp_periodic_2d(g, v.data(), x);
}

/// Cubic Lagrange interpolation of samples v_j = f(x0 + j dx), clamped to the table range.
inline double interp_uniform(const std::vector<double>& v, double x0, double dx, double x) {
    const auto n = static_cast<long>(v.size());
    double s = (x - x0) / dx;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    long j = std::clamp(static_cast<long>(std::floor(s)) - 1, 0L, n - 4);
    const double u = s - static_cast<double>(j);  // in [0, 3]
    const double w0 = -(u - 1) * (u - 2) * (u - 3) / 6, w1 = u * (u - 2) * (u - 3) / 2;
    const double w2 = -u * (u - 1) * (u - 3) / 2, w3 = u * (u - 1) * (u - 2) / 6;
    return w0 * v[j] + w1 * v[j + 1] + w2 * v[j + 2] + w3 * v[j + 3];
}

}  // namespace stablab
