#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "spectral_models.hpp"
#include "subordinator.hpp"
#include "tail_series.hpp"

namespace stablab {

/// Heat kernel p(t,.) with its gradient and Hessian sampled on a grid.
struct DensityField {
    double t = 0;
    GridSpec grid;
    GridFunction p;
    std::vector<GridFunction> dp;   // one field per axis
    std::vector<GridFunction> d2p;  // d = 1: {xx}; d = 2: {xx, xy, yy}
    double tail_mass_estimate = 0;  // mass outside the box
    double tail_fit_estimate = 0;   // one-term power-law fit on the outer shell, for comparison
    double min_relative = 0;        // min p / max p
    bool ringing_flagged = false;   // min p < -1e-6 max p

    Kind kind = Kind::IsotropicFractional;
    double alpha = 0.5, mass = 0, trunc_radius = 0;

    int dim() const { return grid.dim; }
    const GridFunction& hess(int a, int b) const { return d2p[grid.dim == 1 ? 0 : a + b]; }
    /// Trapezoidal mass in the box plus the tail estimate.
    double total_mass() const { return trapezoid_sum(grid, p) + tail_mass_estimate; }
};

struct KernelOptions {
    double nyquist_tol = 1e-9;       // bound on exp(t Psi) along the boundary of the dual box
    double min_scale_units = 3.0;    // heavy tails: smallest box half-extent in kernel scales
    double max_light_tail = 1e-2;    // light tails: largest admissible tail mass
    bool dealias = true;             // subtract periodic images of the far field
};

namespace detail {

/// Largest exp(t Psi) over the boundary of the dual box [-nyq, nyq]^d.
inline double boundary_decay(const StableModel& m, double t, double nyq, int dim) {
    if (dim == 1) return std::exp(t * symbol(m, {nyq, 0}));
    double worst = 0;
    for (int i = 0; i <= 64; ++i) {
        const double s = nyq * (-1 + i / 32.0);
        worst = std::max({worst, std::exp(t * symbol(m, {nyq, s})), std::exp(t * symbol(m, {s, nyq}))});
    }
    return worst;
}

/// Spatial scale of the time-t kernel: (t max_{|s|=1} |Psi(s)|)^{1/alpha}, per axis for Cylindrical.
inline double kernel_scale(const StableModel& m, double t) {
    double a = 0;
    if (m.kind == Kind::Cylindrical) {
        for (double w : m.atoms) a = std::max(a, w);
    } else {
        for (int i = 0; i < 360; ++i) {
            const double ang = M_PI * i / 360.0;
            a = std::max(a, -symbol(m, m.dim == 1 ? Point{1, 0} : Point{std::cos(ang), std::sin(ang)}));
        }
    }
    return std::pow(t * a, 1 / m.alpha);
}

struct RawFields {
    GridFunction p;
    std::vector<GridFunction> dp, d2p;
};

/// Periodized density and derivatives: inverse DFT of exp(t Psi) times 1, i lambda, -lambda lambda^T.
inline RawFields periodic_fields(const StableModel& m, double t, const GridSpec& g) {
    const std::size_t total = g.size();
    CField base(total);
    for (std::size_t i = 0; i < total; ++i) {
        // e^{-i lambda L} = (-1)^k moves the origin of the grid to -L
        const std::size_t k0 = g.dim == 1 ? i : i / g.n, k1 = g.dim == 1 ? 0 : i % g.n;
        base[i] = ((k0 + k1) % 2 ? -1.0 : 1.0);
    }
    // exp(t Psi) is even, so the Nyquist-line averaging only has to act on the polynomial factors
    for (std::size_t i = 0; i < total; ++i) base[i] *= std::exp(t * symbol(m, frequency_of(g, i)));
    const double inv = 1.0 / std::pow(2 * g.half_extent, g.dim);
    auto invert = [&](auto&& mult) {
        CField a(total);
        for (std::size_t i = 0; i < total; ++i) a[i] = base[i] * symmetrized_multiplier(g, i, mult);
        fft_inplace(g, a, FFTW_BACKWARD);
        GridFunction out(total);
        for (std::size_t i = 0; i < total; ++i) out[i] = a[i].real() * inv;
        return out;
    };
    RawFields r;
    r.p = invert([](const Point&) { return cplx(1, 0); });
    for (int a = 0; a < g.dim; ++a) r.dp.push_back(invert([a](const Point& l) { return cplx(0, l[a]); }));
    if (g.dim == 1) {
        r.d2p.push_back(invert([](const Point& l) { return cplx(-l[0] * l[0], 0); }));
    } else {
        for (auto [a, b] : {std::pair{0, 0}, std::pair{0, 1}, std::pair{1, 1}})
            r.d2p.push_back(invert([a = a, b = b](const Point& l) { return cplx(-l[a] * l[b], 0); }));
    }
    return r;
}

/// Cubic interpolation on a (n+1)^d lattice covering [-L, L]^d including both ends.
inline double lattice_interp(const std::vector<double>& v, std::size_t n, int dim, double L, const Point& x) {
    const double dx = 2 * L / static_cast<double>(n);
    if (dim == 1) return interp_uniform(v, -L, dx, x[0]);
    auto weights = [&](double coord, long& j, double* w) {
        const double s = std::clamp((coord + L) / dx, 0.0, static_cast<double>(n));
        j = std::clamp(static_cast<long>(std::floor(s)) - 1, 0L, static_cast<long>(n) - 3);
        const double u = s - static_cast<double>(j);
        w[0] = -(u - 1) * (u - 2) * (u - 3) / 6;
        w[1] = u * (u - 2) * (u - 3) / 2;
        w[2] = -u * (u - 1) * (u - 3) / 2;
        w[3] = u * (u - 1) * (u - 2) / 6;
    };
    long j0, j1;
    double w0[4], w1[4];
    weights(x[0], j0, w0);
    weights(x[1], j1, w1);
    double acc = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) acc += w0[a] * w1[b] * v[static_cast<std::size_t>(j0 + a) * (n + 1) + static_cast<std::size_t>(j1 + b)];
    return acc;
}

/// Sum over nonzero lattice shifts 2Ln of the far-field series, with its derivatives.
/// The sums are formed on a coarse lattice and interpolated; the shells beyond |n|_inf = M
/// are replaced by their integral.
inline void subtract_images(const StableModel& m, double t, const GridSpec& g, RawFields& f) {
    const TailSeries ts(m);
    const double L = g.half_extent;
    const int dim = g.dim;
    const std::size_t n = dim == 1 ? 256 : 32;
    const int M = dim == 1 ? 64 : 12;
    const int M2 = dim == 1 ? 0 : M;
    const std::size_t pts = dim == 1 ? n + 1 : (n + 1) * (n + 1);
    const int ncomp = 1 + dim + (dim == 1 ? 1 : 3);
    auto add = [](Jet& acc, const Jet& j) {
        acc.v += j.v;
        for (int c = 0; c < 2; ++c) acc.g[c] += j.g[c];
        for (int c = 0; c < 3; ++c) acc.H[c] += j.H[c];
    };
    auto ring_sum = [&](const Point& x, int lo, int hi) {
        Jet acc;
        for (int a = -hi; a <= hi; ++a)
            for (int b = -std::min(hi, M2); b <= std::min(hi, M2); ++b) {
                const int ring = std::max(std::abs(a), std::abs(b));
                if (ring < lo || ring > hi) continue;
                add(acc, ts.jet(t, {x[0] + 2 * L * a, x[1] + 2 * L * b}));
            }
        return acc;
    };
    auto subtract = [&](std::size_t i, const Jet& j) {
        f.p[i] -= j.v;
        for (int c = 0; c < dim; ++c) f.dp[c][i] -= j.g[c];
        if (dim == 1) f.d2p[0][i] -= j.H[0];
        else
            for (int c = 0; c < 3; ++c) f.d2p[c][i] -= j.H[c];
    };
    std::vector<std::vector<double>> S(ncomp, std::vector<double>(pts, 0.0));
    const double far = ts.exterior_mass(t, (2 * M + 1) * L) / std::pow(2 * L, dim);
    const double dx = 2 * L / static_cast<double>(n);
    // the image field is even under x -> -x (lattice index i -> pts-1-i), so half the lattice suffices
    for (std::size_t i = 0; i <= pts / 2; ++i) {
        const Point x = dim == 1 ? Point{-L + i * dx, 0} : Point{-L + (i / (n + 1)) * dx, -L + (i % (n + 1)) * dx};
        const Jet acc = ring_sum(x, 1, M);
        const std::size_t k = pts - 1 - i;
        S[0][i] = S[0][k] = acc.v + far;
        for (int c = 0; c < dim; ++c) {
            S[1 + c][i] = acc.g[c];
            S[1 + c][k] = -acc.g[c];
        }
        if (dim == 1) {
            S[2][i] = S[2][k] = acc.H[0];
        } else {
            for (int c = 0; c < 3; ++c) S[3 + c][i] = S[3 + c][k] = acc.H[c];
        }
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point x = g.point(i);
        Jet far_rings;
        far_rings.v = lattice_interp(S[0], n, dim, L, x);
        for (int c = 0; c < dim; ++c) far_rings.g[c] = lattice_interp(S[1 + c], n, dim, L, x);
        if (dim == 1) far_rings.H[0] = lattice_interp(S[2], n, dim, L, x);
        else
            for (int c = 0; c < 3; ++c) far_rings.H[c] = lattice_interp(S[3 + c], n, dim, L, x);
        subtract(i, far_rings);
    }
}

/// c = mean of p r^{d+alpha} over the shell |y|_inf >= 0.9 L, then the power law integrated beyond the box.
inline double power_law_tail(const GridSpec& g, const GridFunction& p, double alpha) {
    const double L = g.half_extent;
    double c = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point y = g.point(i);
        if (std::max(std::abs(y[0]), g.dim == 2 ? std::abs(y[1]) : 0.0) < 0.9 * L) continue;
        c += p[i] * std::pow(norm(y, g.dim), g.dim + alpha);
        ++cnt;
    }
    c /= static_cast<double>(cnt);
    if (g.dim == 1) return 2 * c * std::pow(L, -alpha) / alpha;
    double ang = 0;
    const int nphi = 1024;
    for (int j = 0; j < nphi; ++j) {
        const double ph = 2 * M_PI * (j + 0.5) / nphi;
        ang += std::pow(L / std::max(std::abs(std::cos(ph)), std::abs(std::sin(ph))), -alpha);
    }
    return c * ang * (2 * M_PI / nphi) / alpha;
}

inline void finish_field(DensityField& d, const StableModel& m) {
    d.kind = m.kind;
    d.alpha = m.alpha;
    d.mass = m.mass;
    d.trunc_radius = m.trunc_radius;
    double mx = 0, mn = 0;
    for (double v : d.p) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    d.min_relative = mx > 0 ? mn / mx : 0;
    d.ringing_flagged = mn < -1e-6 * mx;
}

}  // namespace detail

/// Grid of N points per axis whose Nyquist frequency sits 5% beyond the point where
/// exp(t Psi) falls to nyquist_tol on the boundary of the dual box.
inline GridSpec admissible_grid(const StableModel& m, double t, std::size_t N, double nyquist_tol = 1e-12) {
    require(t > 0 && std::isfinite(t), "admissible_grid: t must be positive");
    require(nyquist_tol > 0 && nyquist_tol < 1, "admissible_grid: tolerance must lie in (0,1)");
    double lo = 1e-8, hi = 1e14;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        (detail::boundary_decay(m, t, mid, m.dim) > nyquist_tol ? lo : hi) = mid;
    }
    const double h = M_PI / (1.05 * hi);
    return GridSpec(m.dim, 0.5 * static_cast<double>(N) * h, N);
}

/// Heat kernel of a symmetric model by Fourier inversion on the grid.
/// The FFT returns the periodized kernel; for the heavy-tailed stable kinds the periodic images
/// are removed with the convergent far-field series, which also supplies the exterior mass.
inline DensityField density_fft(const StableModel& m, double t, const GridSpec& g, const KernelOptions& opt = {}) {
    require(t > 0 && std::isfinite(t), "density_fft: t must be positive");
    require(m.kind != Kind::Relativistic, "density_fft: relativistic kernels go through density_relativistic");
    require(g.dim == m.dim, "density_fft: grid and model dimensions differ");
    const double decay = detail::boundary_decay(m, t, g.nyquist(), g.dim);
    if (decay > opt.nyquist_tol)
        throw NumericalGuard("density_fft: exp(t Psi) = " + std::to_string(decay) +
                             " at the Nyquist frequency exceeds the aliasing tolerance; refine the grid or raise t");
    const bool heavy = m.symmetric_stable();
    if (heavy && g.half_extent < opt.min_scale_units * detail::kernel_scale(m, t))
        throw NumericalGuard("density_fft: box half-extent below " + std::to_string(opt.min_scale_units) +
                             " kernel scales; the kernel support exceeds the grid");

    DensityField d;
    d.t = t;
    d.grid = g;
    auto raw = detail::periodic_fields(m, t, g);
    d.tail_fit_estimate = detail::power_law_tail(g, raw.p, m.alpha);
    if (heavy && opt.dealias) {
        if (m.kind == Kind::Cylindrical && g.dim == 2) {
            // images of a product kernel: q_per (x) q_per - q (x) q
            const GridSpec g1(1, g.half_extent, g.n);
            std::vector<DensityField> q;
            std::vector<detail::RawFields> qp;
            for (int a = 0; a < 2; ++a) {
                const auto m1 = cylindrical(m.alpha, 1, {m.atoms[a]});
                q.push_back(density_fft(m1, t, g1, opt));
                qp.push_back(detail::periodic_fields(m1, t, g1));
            }
            const std::size_t N = g.n;
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    const std::size_t k = i * N + j;
                    auto img = [&](double a, double b, double c, double e) { return a * b - c * e; };
                    raw.p[k] -= img(qp[0].p[i], qp[1].p[j], q[0].p[i], q[1].p[j]);
                    raw.dp[0][k] -= img(qp[0].dp[0][i], qp[1].p[j], q[0].dp[0][i], q[1].p[j]);
                    raw.dp[1][k] -= img(qp[0].p[i], qp[1].dp[0][j], q[0].p[i], q[1].dp[0][j]);
                    raw.d2p[0][k] -= img(qp[0].d2p[0][i], qp[1].p[j], q[0].d2p[0][i], q[1].p[j]);
                    raw.d2p[1][k] -= img(qp[0].dp[0][i], qp[1].dp[0][j], q[0].dp[0][i], q[1].dp[0][j]);
                    raw.d2p[2][k] -= img(qp[0].p[i], qp[1].d2p[0][j], q[0].p[i], q[1].d2p[0][j]);
                }
            d.tail_mass_estimate = 1 - (1 - q[0].tail_mass_estimate) * (1 - q[1].tail_mass_estimate);
        } else {
            detail::subtract_images(m, t, g, raw);
            d.tail_mass_estimate = TailSeries(m).exterior_mass(t, g.half_extent);
        }
    } else {
        d.tail_mass_estimate = d.tail_fit_estimate;
        if (!heavy && d.tail_mass_estimate > opt.max_light_tail)
            throw NumericalGuard("density_fft: tail mass estimate " + std::to_string(d.tail_mass_estimate) +
                                 " exceeds the admissible bound; the kernel support exceeds the grid");
    }
    d.p = std::move(raw.p);
    d.dp = std::move(raw.dp);
    d.d2p = std::move(raw.d2p);
    detail::finish_field(d, m);
    return d;
}

/// Relativistic kernel by Gaussian subordination,
/// p(t,x) = e^{mt} int g(u,x) e^{-m^{2/alpha} u} theta(t,u) du with g(u,x) = (4 pi u)^{-d/2} e^{-|x|^2/4u}.
/// The integral runs in log u with the trapezoid rule on quad_nodes nodes.
inline DensityField density_relativistic(const StableModel& m, double t, const GridSpec& g, int quad_nodes = 512) {
    require(m.kind == Kind::Relativistic, "density_relativistic: model must be Relativistic");
    require(m.mass >= 0, "density_relativistic: mass must be >= 0");
    require(t > 0 && t <= 1, "density_relativistic: t must lie in (0,1]");
    require(quad_nodes >= 64, "density_relativistic: need at least 64 quadrature nodes");
    require(g.dim == m.dim, "density_relativistic: grid and model dimensions differ");
    const auto S = SubordinatorDensity::get(m.alpha / 2);
    const double tau = std::pow(t, 2 / m.alpha);  // theta(t,u) = theta(1, u / tau) / tau
    const double b = m.mass_exponent() * tau;
    const double w0 = S->log_lower();
    double w1 = std::log(1e30);
    if (b > 0) w1 = std::min(w1, std::log(100 / b));
    const double dw = (w1 - w0) / (quad_nodes - 1);
    const double pre = std::exp(m.mass * t);
    std::vector<double> u(quad_nodes), c(quad_nodes);
    for (int i = 0; i < quad_nodes; ++i) {
        const double v = std::exp(w0 + dw * i);
        u[i] = tau * v;
        c[i] = pre * dw * (i == 0 || i == quad_nodes - 1 ? 0.5 : 1.0) * v * S->density(v) * std::exp(-b * v);
    }
    const int d = g.dim;
    DensityField out;
    out.t = t;
    out.grid = g;
    out.p.assign(g.size(), 0.0);
    out.dp.assign(d, GridFunction(g.size(), 0.0));
    out.d2p.assign(d == 1 ? 1 : 3, GridFunction(g.size(), 0.0));
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point x = g.point(i);
        const double r2 = x[0] * x[0] + (d == 2 ? x[1] * x[1] : 0.0);
        double R0 = 0, R1 = 0, R2 = 0;  // sums of c g, c g / u, c g / u^2
        for (int q = 0; q < quad_nodes; ++q) {
            const double gv = c[q] * std::pow(4 * M_PI * u[q], -0.5 * d) * std::exp(-r2 / (4 * u[q]));
            R0 += gv;
            R1 += gv / u[q];
            R2 += gv / (u[q] * u[q]);
        }
        out.p[i] = R0;
        for (int a = 0; a < d; ++a) out.dp[a][i] = -x[a] / 2 * R1;
        if (d == 1) {
            out.d2p[0][i] = x[0] * x[0] / 4 * R2 - R1 / 2;
        } else {
            out.d2p[0][i] = x[0] * x[0] / 4 * R2 - R1 / 2;
            out.d2p[1][i] = x[0] * x[1] / 4 * R2;
            out.d2p[2][i] = x[1] * x[1] / 4 * R2 - R1 / 2;
        }
    }
    // exact exterior mass of the Gaussian mixture outside the box
    const double L = g.half_extent;
    double tail = 0;
    for (int q = 0; q < quad_nodes; ++q) {
        const double out1 = std::erfc(L / (2 * std::sqrt(u[q])));
        tail += c[q] * (d == 1 ? out1 : 1 - (1 - out1) * (1 - out1));
    }
    tail += pre * std::exp(-b * std::exp(w1)) * S->tail_mass(std::exp(w1));
    out.tail_mass_estimate = tail;
    out.tail_fit_estimate = detail::power_law_tail(g, out.p, m.alpha);
    detail::finish_field(out, m);
    return out;
}

/// Dispatch on the model kind.
inline DensityField density(const StableModel& m, double t, const GridSpec& g, const KernelOptions& opt = {}) {
    return m.kind == Kind::Relativistic ? density_relativistic(m, t, g) : density_fft(m, t, g, opt);
}

// ---------------------------------------------------------------------------------------------
// Persistence: "SIPK1", dim, N, L, t, alpha, kind code, mass, trunc, then p, dp, d2p (full d x d).

inline void write_density(const DensityField& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "write_density: cannot open " + path);
    auto put = [&](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    os.write("SIPK1", 5);
    put(static_cast<std::int32_t>(d.grid.dim));
    put(static_cast<std::uint64_t>(d.grid.n));
    put(d.grid.half_extent);
    put(d.t);
    put(d.alpha);
    put(static_cast<std::int32_t>(kind_code(d.kind)));
    put(d.mass);
    put(d.trunc_radius);
    auto arr = [&](const GridFunction& f) { os.write(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(double)); };
    arr(d.p);
    for (const auto& f : d.dp) arr(f);
    for (int a = 0; a < d.grid.dim; ++a)
        for (int b = 0; b < d.grid.dim; ++b) arr(d.hess(a, b));
    require(static_cast<bool>(os), "write_density: write failed for " + path);
}

inline DensityField read_density(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "read_density: cannot open " + path);
    char magic[5];
    is.read(magic, 5);
    require(is && std::memcmp(magic, "SIPK1", 5) == 0, "read_density: bad magic in " + path);
    auto get = [&](auto& v) { is.read(reinterpret_cast<char*>(&v), sizeof(v)); };
    std::int32_t dim, code;
    std::uint64_t N;
    DensityField d;
    double L;
    get(dim);
    get(N);
    get(L);
    get(d.t);
    get(d.alpha);
    get(code);
    get(d.mass);
    get(d.trunc_radius);
    require(static_cast<bool>(is) && code >= 0 && code <= 4, "read_density: truncated header in " + path);
    d.kind = static_cast<Kind>(code);
    d.grid = GridSpec(dim, L, N);
    auto arr = [&] {
        GridFunction f(d.grid.size());
        is.read(reinterpret_cast<char*>(f.data()), f.size() * sizeof(double));
        return f;
    };
    d.p = arr();
    for (int a = 0; a < dim; ++a) d.dp.push_back(arr());
    std::vector<GridFunction> full;
    for (int k = 0; k < dim * dim; ++k) full.push_back(arr());
    require(static_cast<bool>(is), "read_density: truncated data in " + path);
    if (dim == 1) d.d2p = {full[0]};
    else d.d2p = {full[0], full[1], full[3]};
    return d;
}

/// CSV of r, p, dp/dr, d2p/dr2 along the positive first axis.
inline void write_radial_csv(const DensityField& d, const std::string& path) {
    std::ofstream os(path);
    require(static_cast<bool>(os), "write_radial_csv: cannot open " + path);
    os.precision(17);
    os << "r,p,dp_r,d2p_rr\n";
    const std::size_t N = d.grid.n;
    for (std::size_t j = N / 2; j < N; ++j) {
        const std::size_t i = d.grid.dim == 1 ? j : j * N + N / 2;
        os << d.grid.coord(j) << ',' << d.p[i] << ',' << d.dp[0][i] << ',' << d.hess(0, 0)[i] << '\n';
    }
}

}  // namespace stablab
