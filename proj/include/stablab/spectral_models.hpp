#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "quadrature.hpp"

namespace stablab {

enum class Kind { IsotropicFractional, SmoothSpectralDensity, Cylindrical, Truncated, Relativistic };

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::IsotropicFractional: return "IsotropicFractional";
        case Kind::SmoothSpectralDensity: return "SmoothSpectralDensity";
        case Kind::Cylindrical: return "Cylindrical";
        case Kind::Truncated: return "Truncated";
        case Kind::Relativistic: return "Relativistic";
    }
    return "?";
}

inline int kind_code(Kind k) { return static_cast<int>(k); }

inline Kind parse_kind(const std::string& s) {
    for (Kind k : {Kind::IsotropicFractional, Kind::SmoothSpectralDensity, Kind::Cylindrical, Kind::Truncated,
                   Kind::Relativistic})
        if (s == kind_name(k)) return k;
    throw ValidationError("unknown model kind '" + s + "'");
}

/// A_alpha = int_0^inf (1 - cos r) r^{-1-alpha} dr; converts the spectral measure into the
/// angular part of the Levy measure.
inline double levy_constant(double alpha) {
    return std::tgamma(1 - alpha) * std::cos(M_PI * alpha / 2) / alpha;
}

namespace detail {

constexpr std::size_t kAngularNodes = 2048;

// Angular profile on S^1: Phi(psi) = int |cos(phi - psi)|^alpha mu(dphi), with mu = w dphi / Z
// and Z chosen so that w == 1 gives Phi == 1.
struct AngularProfile {
    std::vector<double> w;    // symmetrized density on the nodes, mean 1
    std::vector<double> phi;  // Phi on the nodes
    double Z = 1;

    AngularProfile(double alpha, const std::vector<double>& tab) {
        const std::size_t M = kAngularNodes;
        w.assign(M, 1.0);
        if (!tab.empty()) {
            const std::size_t n = tab.size();
            auto at = [&](double ang) {
                const double s = ang / (2 * M_PI) * static_cast<double>(n);
                const auto j = static_cast<std::size_t>(std::floor(s)) % n;
                const double u = s - std::floor(s);
                return (1 - u) * tab[j] + u * tab[(j + 1) % n];
            };
            for (std::size_t j = 0; j < M; ++j) {
                const double a = 2 * M_PI * static_cast<double>(j) / M;
                w[j] = 0.5 * (at(a) + at(std::fmod(a + M_PI, 2 * M_PI)));
            }
            double mean = 0;
            for (double v : w) mean += v;
            mean /= M;
            require(mean > 0, "spectral density must have positive mass");
            for (double& v : w) {
                require(v >= 0, "spectral density must be non-negative");
                v /= mean;
            }
        }
        std::vector<double> c(M);
        for (std::size_t j = 0; j < M; ++j) c[j] = std::pow(std::abs(std::cos(2 * M_PI * j / M)), alpha);
        Z = 0;
        for (double v : c) Z += v;
        phi.assign(M, 0.0);
        for (std::size_t i = 0; i < M; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < M; ++j) s += c[(i + M - j) % M] * w[j];
            phi[i] = s / Z;
        }
    }

    double operator()(double psi) const {
        const std::size_t M = phi.size();
        double s = psi / (2 * M_PI) * static_cast<double>(M);
        s -= std::floor(s / M) * M;
        const auto j = static_cast<long>(std::floor(s));
        const double u = s - static_cast<double>(j);
        auto at = [&](long k) { return phi[static_cast<std::size_t>(((k % (long)M) + (long)M) % (long)M)]; };
        const double w0 = -u * (u - 1) * (u - 2) / 6, w1 = (u + 1) * (u - 1) * (u - 2) / 2;
        const double w2 = -(u + 1) * u * (u - 2) / 2, w3 = (u + 1) * u * (u - 1) / 6;
        return w0 * at(j - 1) + w1 * at(j) + w2 * at(j + 1) + w3 * at(j + 2);
    }

    double density(double ang) const {
        const std::size_t M = w.size();
        double s = ang / (2 * M_PI) * static_cast<double>(M);
        s -= std::floor(s / M) * M;
        const auto j = static_cast<std::size_t>(std::floor(s)) % M;
        const double u = s - std::floor(s);
        return (1 - u) * w[j] + u * w[(j + 1) % M];
    }
};

// J(X) = int_0^X (1 - cos r) r^{-1-alpha} dr, tabulated on a log grid.
struct TruncationIntegral {
    double alpha, A;
    double x0 = 1e-3, x1 = 256.0;
    std::vector<double> logx, val;

    explicit TruncationIntegral(double a) : alpha(a), A(levy_constant(a)) {
        const std::size_t n = 4000;
        logx.resize(n);
        val.resize(n);
        const double l0 = std::log(x0), l1 = std::log(x1);
        auto f = [&](double r) { return (1 - std::cos(r)) * std::pow(r, -1 - alpha); };
        double acc = small(x0);
        for (std::size_t i = 0; i < n; ++i) {
            logx[i] = l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(n - 1);
            if (i > 0) {
                const double a0 = std::exp(logx[i - 1]), b0 = std::exp(logx[i]);
                const int panels = std::max(1, static_cast<int>(std::ceil((b0 - a0) / 0.25)));
                acc += composite_gl<8>(f, a0, b0, panels);
            }
            val[i] = acc;
        }
    }

    double small(double X) const {
        return std::pow(X, 2 - alpha) / (2 * (2 - alpha)) - std::pow(X, 4 - alpha) / (24 * (4 - alpha)) +
               std::pow(X, 6 - alpha) / (720 * (6 - alpha));
    }

    // int_X^inf e^{ir} r^{-a} dr by repeated integration by parts.
    static cplx oscillatory_tail(double X, double a) {
        cplx term = cplx(0, 1) * std::polar(1.0, X) * std::pow(X, -a);
        cplx sum = term;
        double aa = a;
        for (int k = 0; k < 10; ++k) {
            term *= cplx(0, -1) * aa / X;
            aa += 1;
            sum += term;
        }
        return sum;
    }

    double operator()(double X) const {
        if (X <= 0) return 0;
        if (X < x0) return small(X);
        if (X >= x1) return A - std::pow(X, -alpha) / alpha + oscillatory_tail(X, 1 + alpha).real();
        const double l = std::log(X);
        const double s = (l - logx.front()) / (logx[1] - logx[0]);
        const auto j = std::min(static_cast<std::size_t>(s), logx.size() - 2);
        const double u = s - static_cast<double>(j);
        return (1 - u) * val[j] + u * val[j + 1];
    }
};

}  // namespace detail

/// Immutable operator specification. Construct through the factory functions below.
struct StableModel {
    Kind kind = Kind::IsotropicFractional;
    double alpha = 0.5;
    int dim = 1;
    double mass = 0;
    double trunc_radius = 0;
    std::vector<double> spectral_table;  // tabulated angular density (SmoothSpectralDensity)
    std::vector<double> atoms;           // per-axis atom weights (Cylindrical)
    double eta = 1;

    std::shared_ptr<const detail::AngularProfile> profile;         // d = 2 smooth/isotropic kinds
    std::shared_ptr<const detail::TruncationIntegral> trunc_table;  // Truncated
    std::shared_ptr<const std::vector<double>> trunc_radial;        // Truncated, d = 2: Psi_K on log grid

    bool symmetric_stable() const {
        return kind == Kind::IsotropicFractional || kind == Kind::SmoothSpectralDensity || kind == Kind::Cylindrical;
    }
    /// Scale a with Psi = -a|lambda|^alpha when the symbol is radial and homogeneous (d = 1 always).
    double scale_1d() const {
        if (kind == Kind::Cylindrical) return atoms.empty() ? 1.0 : atoms[0];
        return 1.0;
    }
    double mass_exponent() const { return std::pow(mass, 2.0 / alpha); }  // m^{2/alpha}
};

double symbol(const StableModel& m, const Point& lambda);

namespace detail {

inline void finish_model(StableModel& m) {
    require(m.alpha > 0 && m.alpha < 1, "alpha must lie strictly inside (0,1)");
    require(m.dim == 1 || m.dim == 2, "dim must be 1 or 2");
    if (m.kind == Kind::Cylindrical) {
        if (m.atoms.empty()) m.atoms.assign(m.dim, 1.0);
        require(static_cast<int>(m.atoms.size()) == m.dim, "cylindrical atoms: one weight per axis");
        for (double a : m.atoms) require(a > 0, "cylindrical atoms must be positive");
    }
    if (m.kind == Kind::Relativistic) require(m.mass >= 0, "relativistic mass must be >= 0");
    if (m.kind == Kind::Truncated) require(m.trunc_radius > 0, "truncation radius must be > 0");
    if (m.dim == 2 && m.kind != Kind::Cylindrical)
        m.profile = std::make_shared<AngularProfile>(
            m.alpha, m.kind == Kind::SmoothSpectralDensity ? m.spectral_table : std::vector<double>{});
    if (m.kind == Kind::Truncated) {
        m.trunc_table = std::make_shared<TruncationIntegral>(m.alpha);
        if (m.dim == 2) {
            // radial table of Psi_K(r), r = exp(l) with l on [log(1e-4/K), log(1e6/K)]
            const std::size_t n = 3000;
            const double K = m.trunc_radius, A = m.trunc_table->A;
            const double l0 = std::log(1e-4 / K), l1 = std::log(1e6 / K);
            auto tab = std::make_shared<std::vector<double>>(n);
            const Rule& r = gauss_legendre<64>();
            for (std::size_t i = 0; i < n; ++i) {
                const double rad = std::exp(l0 + (l1 - l0) * i / (n - 1.0));
                // uniform isotropic measure: mu = dphi / Z with Z = int |cos|^alpha
                double s = 0, z = 0;
                for (int q = 0; q < 8; ++q) {  // eight panels on [0, pi/2]
                    const double a = q * M_PI / 16, b = (q + 1) * M_PI / 16;
                    for (std::size_t k = 0; k < r.x.size(); ++k) {
                        const double ph = 0.5 * (a + b) + 0.5 * (b - a) * r.x[k];
                        const double c = std::cos(ph), wt = r.w[k] * 0.5 * (b - a);
                        s += wt * std::pow(rad * c, m.alpha) * (*m.trunc_table)(K * rad * c);
                        z += wt * std::pow(c, m.alpha);
                    }
                }
                (*tab)[i] = -s / (z * A);
            }
            m.trunc_radial = tab;
        }
    }
    // non-degeneracy constant from sampled directions of the homogeneous part
    if (m.dim == 1 || m.kind == Kind::Truncated || m.kind == Kind::Relativistic) {
        m.eta = m.kind == Kind::Cylindrical ? std::max(m.atoms[0], 1.0 / m.atoms[0]) : 1.0;
    } else {
        double lo = 1e300, hi = 0;
        for (int i = 0; i < 720; ++i) {
            const double a = M_PI * i / 720.0;
            const double v = -symbol(m, Point{std::cos(a), std::sin(a)});
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        m.eta = std::max(hi, 1.0 / lo);
    }
}

}  // namespace detail

inline StableModel isotropic(double alpha, int dim) {
    StableModel m;
    m.kind = Kind::IsotropicFractional;
    m.alpha = alpha;
    m.dim = dim;
    detail::finish_model(m);
    return m;
}

inline StableModel smooth_density(double alpha, int dim, std::vector<double> table) {
    StableModel m;
    m.kind = Kind::SmoothSpectralDensity;
    m.alpha = alpha;
    m.dim = dim;
    m.spectral_table = std::move(table);
    detail::finish_model(m);
    return m;
}

/// The strictly positive trigonometric density 1 + a cos(2 phi) sampled on n angles.
inline std::vector<double> trig_density(double a, std::size_t n = 256) {
    std::vector<double> t(n);
    for (std::size_t j = 0; j < n; ++j) t[j] = 1 + a * std::cos(2 * 2 * M_PI * j / n);
    return t;
}

inline StableModel cylindrical(double alpha, int dim, std::vector<double> atoms = {}) {
    StableModel m;
    m.kind = Kind::Cylindrical;
    m.alpha = alpha;
    m.dim = dim;
    m.atoms = std::move(atoms);
    detail::finish_model(m);
    return m;
}

inline StableModel truncated(double alpha, int dim, double K) {
    StableModel m;
    m.kind = Kind::Truncated;
    m.alpha = alpha;
    m.dim = dim;
    m.trunc_radius = K;
    detail::finish_model(m);
    return m;
}

inline StableModel relativistic(double alpha, int dim, double mass) {
    StableModel m;
    m.kind = Kind::Relativistic;
    m.alpha = alpha;
    m.dim = dim;
    m.mass = mass;
    detail::finish_model(m);
    return m;
}

/// Psi(lambda), the real Levy symbol (<= 0).
inline double symbol(const StableModel& m, const Point& lambda) {
    require(std::isfinite(lambda[0]) && std::isfinite(lambda[1]), "symbol: non-finite frequency");
    const double r = norm(lambda, m.dim);
    if (r == 0) return 0.0;
    switch (m.kind) {
        case Kind::IsotropicFractional:
            return -std::pow(r, m.alpha);
        case Kind::SmoothSpectralDensity:
            if (m.dim == 1) return -std::pow(r, m.alpha);
            return -std::pow(r, m.alpha) * (*m.profile)(std::atan2(lambda[1], lambda[0]));
        case Kind::Cylindrical: {
            double s = 0;
            for (int k = 0; k < m.dim; ++k) s += m.atoms[k] * std::pow(std::abs(lambda[k]), m.alpha);
            return -s;
        }
        case Kind::Truncated: {
            require(m.trunc_radius > 0, "truncated symbol needs K > 0");
            const double K = m.trunc_radius, A = m.trunc_table->A;
            if (m.dim == 1) return -std::pow(r, m.alpha) * (*m.trunc_table)(K * r) / A;
            const auto& tab = *m.trunc_radial;
            const double l0 = std::log(1e-4 / K), l1 = std::log(1e6 / K), l = std::log(r);
            if (l <= l0) return tab.front() * std::pow(r / std::exp(l0), 2.0);
            if (l >= l1) {
                // beyond the table: -|lambda|^alpha + nu(|y| > K)
                return -std::pow(r, m.alpha) + std::pow(K, -m.alpha) / (m.alpha * A);
            }
            const double s = (l - l0) / (l1 - l0) * (tab.size() - 1.0);
            const auto j = std::min(static_cast<std::size_t>(s), tab.size() - 2);
            const double u = s - j;
            return (1 - u) * tab[j] + u * tab[j + 1];
        }
        case Kind::Relativistic:
            return -std::pow(r * r + m.mass_exponent(), m.alpha / 2) + m.mass;
    }
    return 0;
}

// ---------------------------------------------------------------------------------------------
// Levy measure in polar form: nu(dy) = k(rho) d rho  mu_tilde(ds), with a discrete sphere rule.

struct Direction {
    Point s;
    double weight;  // mu_tilde mass of this node
};

inline std::vector<Direction> sphere_rule(const StableModel& m, std::size_t n_dir = 256) {
    const double A = levy_constant(m.alpha);
    std::vector<Direction> out;
    if (m.dim == 1) {
        const double a = m.scale_1d();
        out.push_back({{1.0, 0.0}, 0.5 * a / A});
        out.push_back({{-1.0, 0.0}, 0.5 * a / A});
        return out;
    }
    if (m.kind == Kind::Cylindrical) {
        for (int k = 0; k < 2; ++k)
            for (double sg : {1.0, -1.0}) {
                Point s{0, 0};
                s[k] = sg;
                out.push_back({s, 0.5 * m.atoms[k] / A});
            }
        return out;
    }
    require(n_dir >= 256 && n_dir % 2 == 0, "sphere rule needs an even count >= 256");
    std::vector<double> ang(n_dir), w(n_dir);
    double Z = 0;
    for (std::size_t j = 0; j < n_dir; ++j) {
        ang[j] = 2 * M_PI * (j + 0.5) / n_dir;
        w[j] = m.profile ? m.profile->density(ang[j]) : 1.0;
        Z += std::pow(std::abs(std::cos(ang[j])), m.alpha);
    }
    for (std::size_t j = 0; j < n_dir; ++j)
        out.push_back({{std::cos(ang[j]), std::sin(ang[j])}, w[j] / (Z * A)});
    return out;
}

/// Radial kernel k(rho) of the Levy measure.
inline double radial_kernel(const StableModel& m, double rho) {
    double k = std::pow(rho, -1 - m.alpha);
    if (m.kind == Kind::Truncated && rho > m.trunc_radius) return 0.0;
    if (m.kind == Kind::Relativistic && m.mass > 0) {
        // tempering factor of the subordinated Gaussian: 2 (4z)^{nu/2} K_nu(sqrt z) / (Gamma(nu) 4^nu)
        const double nu = 0.5 * (m.dim + m.alpha), z = m.mass_exponent() * rho * rho;
        if (z < 1e-14) return k;
        const double ratio = 2 * std::pow(4 * z, nu / 2) * std::cyl_bessel_k(nu, std::sqrt(z)) /
                             (std::tgamma(nu) * std::pow(4.0, nu));
        k *= ratio;
    }
    return k;
}

enum class Extension { Periodic, Constant };

namespace detail {

inline double clamp_interp_1d(const GridSpec& g, const double* v, double x) {
    const double h = g.spacing();
    const auto n = static_cast<long>(g.n);
    const double xmax = g.coord(g.n - 1);
    x = std::clamp(x, -g.half_extent, xmax);
    const double s = (x + g.half_extent) / h;
    long j = std::min(static_cast<long>(std::floor(s)), n - 2);
    const double u = s - static_cast<double>(j);
    auto at = [&](long k) { return v[std::clamp(k, 0L, n - 1)]; };
    const double w0 = -u * (u - 1) * (u - 2) / 6, w1 = (u + 1) * (u - 1) * (u - 2) / 2;
    const double w2 = -(u + 1) * u * (u - 2) / 2, w3 = (u + 1) * u * (u - 1) / 6;
    return w0 * at(j - 1) + w1 * at(j) + w2 * at(j + 1) + w3 * at(j + 2);
}

inline double clamp_interp_2d(const GridSpec& g, const GridFunction& v, const Point& x) {
    const double h = g.spacing();
    const auto n = static_cast<long>(g.n);
    const double xmax = g.coord(g.n - 1);
    long j[2];
    double u[2];
    for (int a = 0; a < 2; ++a) {
        const double xc = std::clamp(x[a], -g.half_extent, xmax);
        const double s = (xc + g.half_extent) / h;
        j[a] = std::min(static_cast<long>(std::floor(s)), n - 2);
        u[a] = s - static_cast<double>(j[a]);
    }
    auto wts = [](double t, double* w) {
        w[0] = -t * (t - 1) * (t - 2) / 6;
        w[1] = (t + 1) * (t - 1) * (t - 2) / 2;
        w[2] = -(t + 1) * t * (t - 2) / 2;
        w[3] = (t + 1) * t * (t - 1) / 6;
    };
    double w0[4], w1[4];
    wts(u[0], w0);
    wts(u[1], w1);
    double acc = 0;
    for (int a = 0; a < 4; ++a) {
        const long r = std::clamp(j[0] + a - 1, 0L, n - 1);
        for (int b = 0; b < 4; ++b) acc += w0[a] * w1[b] * v[r * n + std::clamp(j[1] + b - 1, 0L, n - 1)];
    }
    return acc;
}

}  // namespace detail

inline double evaluate(const GridSpec& g, const GridFunction& v, const Point& x, Extension ext) {
    if (ext == Extension::Periodic) return interp_periodic(g, v, x);
    return g.dim == 1 ? detail::clamp_interp_1d(g, v.data(), x[0]) : detail::clamp_interp_2d(g, v, x);
}

/// Spectral path: IFFT(Psi * FFT(phi)) on the periodic grid.
inline GridFunction levy_apply_spectral(const StableModel& m, const GridFunction& phi, const GridSpec& g) {
    require(phi.size() == g.size(), "levy_apply: field/grid size mismatch");
    return apply_multiplier(g, phi, [&](const Point& l) { return cplx(symbol(m, l), 0); });
}

struct LevyQuadratureOptions {
    double r0 = 1.0;                       // split radius of the singular quadrature
    Extension extension = Extension::Periodic;
    std::size_t n_dir = 256;               // sphere nodes in d = 2
    double outer_radius = 0;               // 0: chosen from the grid
};

/// Singular polar quadrature of L phi at the listed grid indices (all indices when empty).
inline GridFunction levy_apply_quadrature(const StableModel& m, const GridFunction& phi, const GridSpec& g,
                                          const LevyQuadratureOptions& opt = {},
                                          const std::vector<std::size_t>& at = {}) {
    require(phi.size() == g.size(), "levy_apply: field/grid size mismatch");
    const double h = g.spacing();
    require(h <= opt.r0 / 4, "levy_apply: grid too coarse for the quadrature (h > r0/4)");
    const auto dirs = sphere_rule(m, opt.n_dir);
    const double r0 = opt.r0, a = m.alpha;

    // gradient of phi for the first-order compensation
    std::vector<GridFunction> grad(g.dim);
    if (opt.extension == Extension::Periodic) {
        const CField sp = to_spectrum(g, phi);
        for (int k = 0; k < g.dim; ++k) grad[k] = spectral_derivative(g, sp, k);
    } else {
        for (int k = 0; k < g.dim; ++k) {
            grad[k].assign(g.size(), 0.0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                Point p = g.point(i), q = p;
                p[k] += h;
                q[k] -= h;
                grad[k][i] = (evaluate(g, phi, p, opt.extension) - evaluate(g, phi, q, opt.extension)) / (2 * h);
            }
        }
    }

    double R = opt.outer_radius;
    if (R <= 0) R = opt.extension == Extension::Periodic ? std::max(50.0, 8 * 2 * g.half_extent)
                                                         : 2 * std::sqrt(double(g.dim)) * g.half_extent + r0;
    double outer_end = R;
    if (m.kind == Kind::Truncated) outer_end = std::min(R, m.trunc_radius);
    if (m.kind == Kind::Relativistic && m.mass > 0) outer_end = std::min(R, r0 + 60.0 / std::pow(m.mass, 1 / a));
    const double inner_end = std::min(r0, m.kind == Kind::Truncated ? m.trunc_radius : r0);

    // radial nodes: geometric panels on (0, inner_end], uniform panels on [r0, outer_end]
    struct Node { double rho, w; };
    std::vector<Node> inner, outer;
    {
        const Rule& rule = gauss_legendre<8>();
        double hi = inner_end;
        const double lo_end = std::min(h, inner_end) * std::pow(2.0, -20);
        while (hi > lo_end) {
            const double lo = 0.5 * hi;
            for (std::size_t i = 0; i < rule.x.size(); ++i) {
                const double rho = 0.5 * (lo + hi) + 0.5 * (hi - lo) * rule.x[i];
                inner.push_back({rho, rule.w[i] * 0.5 * (hi - lo) * radial_kernel(m, rho)});
            }
            hi = lo;
        }
        if (outer_end > r0) {
            const int panels = static_cast<int>(std::ceil((outer_end - r0) / h));
            const double H = (outer_end - r0) / panels;
            for (int p = 0; p < panels; ++p)
                for (std::size_t i = 0; i < rule.x.size(); ++i) {
                    const double rho = r0 + (p + 0.5) * H + 0.5 * H * rule.x[i];
                    outer.push_back({rho, rule.w[i] * 0.5 * H * radial_kernel(m, rho)});
                }
        }
    }
    // first-moment compensation int_0^{inner_end} rho k(rho) d rho
    double comp = 0;
    if (m.kind == Kind::Relativistic && m.mass > 0) {
        for (const auto& nd : inner) comp += nd.w * nd.rho;
    } else {
        comp = std::pow(inner_end, 1 - a) / (1 - a);
    }
    // tail mass int_{outer_end}^inf k
    double tail = 0;
    if (m.kind == Kind::Truncated) tail = 0;
    else if (m.kind == Kind::Relativistic && m.mass > 0) tail = 0;
    else tail = std::pow(outer_end, -a) / a;

    std::vector<std::size_t> idx = at;
    if (idx.empty()) {
        idx.resize(g.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    }
    GridFunction out(g.size(), 0.0);
    for (std::size_t i : idx) {
        const Point x = g.point(i);
        const double f0 = phi[i];
        double acc = 0;
        for (const auto& d : dirs) {
            const double ds = grad[0][i] * d.s[0] + (g.dim == 2 ? grad[1][i] * d.s[1] : 0.0);
            double s_in = 0, s_out = 0;
            for (const auto& nd : inner) {
                const Point y{x[0] + nd.rho * d.s[0], x[1] + nd.rho * d.s[1]};
                s_in += nd.w * (evaluate(g, phi, y, opt.extension) - f0 - nd.rho * ds);
            }
            for (const auto& nd : outer) {
                const Point y{x[0] + nd.rho * d.s[0], x[1] + nd.rho * d.s[1]};
                s_out += nd.w * (evaluate(g, phi, y, opt.extension) - f0);
            }
            double far = 0;
            if (tail > 0) {
                double at_inf = 0;
                if (opt.extension == Extension::Periodic) {
                    // average of phi along the ray beyond R; one period for axis directions
                    const bool axis = g.dim == 1 || d.s[0] == 0.0 || d.s[1] == 0.0;
                    const double len = (axis ? 1.0 : 8.0) * 2 * g.half_extent;
                    const std::size_t cnt = (axis ? 1 : 8) * g.n;
                    for (std::size_t q = 0; q < cnt; ++q) {
                        const double rho = R + len * static_cast<double>(q) / static_cast<double>(cnt);
                        at_inf += evaluate(g, phi, {x[0] + rho * d.s[0], x[1] + rho * d.s[1]}, opt.extension);
                    }
                    at_inf /= static_cast<double>(cnt);
                } else {
                    at_inf = evaluate(g, phi, {x[0] + 4 * R * d.s[0], x[1] + 4 * R * d.s[1]}, opt.extension);
                }
                far = (at_inf - f0) * tail;
            }
            acc += d.weight * (s_in + comp * ds + s_out + far);
        }
        out[i] = acc;
    }
    return out;
}

}  // namespace stablab
