#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "flow_engine.hpp"
#include "grid.hpp"
#include "integrability.hpp"
#include "kernel_engine.hpp"
#include "quadrature.hpp"
#include "spectral_models.hpp"
#include "stats.hpp"

// Solvers for d_t u + L u + F.D u = -f, u(T) = g, on the torus [-L, L)^d of the grid.
// Data, drift and kernels are periodized; every semigroup step is a spectral multiplier.

namespace stablab {

using SourceFn = std::function<double(double, const Point&)>;
using TerminalFn = std::function<double(const Point&)>;

struct FreezingPair {
    double tau = 0;
    Point xi{0, 0};
};

/// eta(y) = rho(|y - c| / radius), rho(r) = exp(1 - 1/(1 - (2r-1)_+^2)) for r < 1 and 0 beyond.
/// global = true is the degenerate cutoff eta = 1.
struct CutoffSpec {
    double radius = 1.0;
    bool global = false;

    static double profile(double r) {
        if (r >= 1) return 0.0;
        const double q = std::max(2 * r - 1, 0.0);
        return std::exp(1 - 1 / (1 - q * q));
    }
};

struct Problem {
    StableModel model = isotropic(0.7, 1);
    DriftField drift = zero_drift(1);
    SourceFn f = [](double, const Point&) { return 0.0; };
    TerminalFn g = [](const Point&) { return 0.0; };
    double T = 0.25;
    double beta = 0.5;  // Hoelder index of f and F
    GridSpec grid = GridSpec(1, M_PI, 512);

    void validate() const {
        require(model.dim == grid.dim && drift.dim == grid.dim, "problem: model, drift and grid dimensions differ");
        require(T > 0 && std::isfinite(T), "problem: T must be positive");
        require(beta > 0 && beta < 1, "problem: beta must lie in (0,1)");
        require(f && g, "problem: source and terminal data must be set");
    }
};

/// u(t_k, .) on increasing times with spectral gradients and per-slice sup norms.
struct SpaceTimeField {
    GridSpec grid;
    std::vector<double> times;
    std::vector<GridFunction> u;
    std::vector<std::vector<GridFunction>> grad;  // grad[k][axis]
    std::vector<double> sup;
    std::string gradient_method = "spectral";

    /// Fills gradients and sup norms; rejects non-finite slices.
    void finalize() {
        require(times.size() == u.size() && !u.empty(), "space-time field: times and slices differ");
        grad.assign(u.size(), {});
        sup.assign(u.size(), 0.0);
        for (std::size_t k = 0; k < u.size(); ++k) {
            for (double v : u[k])
                if (!std::isfinite(v))
                    throw NumericalGuard("space-time field: non-finite value at t=" + std::to_string(times[k]));
            const CField sp = to_spectrum(grid, u[k]);
            for (int a = 0; a < grid.dim; ++a) grad[k].push_back(spectral_derivative(grid, sp, a));
            sup[k] = sup_norm(u[k]);
        }
    }

    std::size_t slice_index(double t) const {
        for (std::size_t k = 0; k < times.size(); ++k)
            if (std::abs(times[k] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return k;
        throw ValidationError("space-time field: no slice at t=" + std::to_string(t));
    }
};

namespace detail {

inline void require_grid(const GridSpec& g, const GridFunction& v) {
    require(v.size() == g.size(), "field/grid size mismatch");
}

/// Multiplier exp(lag (Psi(lambda) - eps |lambda|)) e^{i lambda.shift}, optionally times i lambda_axis.
inline auto propagator(const StableModel& m, double lag, const Point& shift, double eps = 0, int axis = -1) {
    return [&m, lag, shift, eps, axis](const Point& l) {
        const double r = std::hypot(l[0], l[1]);
        cplx v = std::exp(lag * (symbol(m, l) - eps * r)) * std::polar(1.0, l[0] * shift[0] + l[1] * shift[1]);
        if (axis >= 0) v *= cplx(0, l[axis]);
        return v;
    };
}

// Cubic Lagrange weights at fraction u of the stencil {-1, 0, 1, 2}.
inline void cubic_weights(double u, double* w) {
    w[0] = -u * (u - 1) * (u - 2) / 6;
    w[1] = (u + 1) * (u - 1) * (u - 2) / 2;
    w[2] = -(u + 1) * u * (u - 2) / 2;
    w[3] = (u + 1) * u * (u - 1) / 6;
}

/// Cubic interpolation in time between uniformly spaced slices (stencil clamped to the ends).
inline GridFunction time_interp(const std::vector<GridFunction>& slices, double t0, double dt, double t) {
    const auto n = static_cast<long>(slices.size());
    require(n >= 4, "time interpolation needs at least four slices");
    const double s = std::clamp((t - t0) / dt, 0.0, static_cast<double>(n - 1));
    const long j = std::clamp(static_cast<long>(std::floor(s)) - 1, 0L, n - 4);
    const double u = s - static_cast<double>(j) - 1;
    double w[4];
    cubic_weights(u, w);
    GridFunction out(slices[0].size(), 0.0);
    for (int q = 0; q < 4; ++q)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[q] * slices[j + q][i];
    return out;
}

/// Graded nodes s = t + (T - t) sigma^q on 8 Gauss panels in sigma.
struct GradedNode {
    double s, w;
};

inline std::vector<GradedNode> graded_mesh(double t, double T, std::size_t nodes, double q) {
    require(nodes % 8 == 0 && nodes >= 8, "graded mesh: node count must be a positive multiple of 8");
    const Rule& r = gauss_legendre<8>();
    const std::size_t panels = nodes / 8;
    std::vector<GradedNode> out;
    for (std::size_t p = 0; p < panels; ++p) {
        const double a = static_cast<double>(p) / panels, b = static_cast<double>(p + 1) / panels;
        for (std::size_t i = 0; i < r.x.size(); ++i) {
            const double sg = 0.5 * (a + b) + 0.5 * (b - a) * r.x[i];
            const double w = 0.5 * (b - a) * r.w[i];
            out.push_back({t + (T - t) * std::pow(sg, q), w * (T - t) * q * std::pow(sg, q - 1)});
        }
    }
    return out;
}

inline GridFunction sample_source(const Problem& P, double s) {
    return sample(P.grid, [&](const Point& x) { return P.f(s, x); });
}

inline GridFunction sample_terminal(const Problem& P) { return sample(P.grid, P.g); }

inline Point wrap_point(const Point& x, const GridSpec& g) {
    return {wrap(x[0], g.half_extent), g.dim == 2 ? wrap(x[1], g.half_extent) : 0.0};
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Frozen semigroup

enum class SemigroupPath { Spectral, Quadrature };

/// (P~_{s,t} phi)(x) = int p(s-t, y - m_{s,t}(x)) phi(y) dy with m_{s,t}(x) = x + int_t^s F(v, theta_{v,tau}(xi)) dv.
/// Spectral: exact multiplier and phase shift on the torus. Quadrature: the de-aliased kernel
/// from density_fft on a box of several torus periods (8 in 1d, 2 in 2d) against interpolated phi,
/// with the mass beyond that box spread as the torus mean of phi.
inline GridFunction frozen_semigroup_apply(const StableModel& m, const DriftField& F, const FreezingPair& pair,
                                           double t, double s, const GridFunction& phi, const GridSpec& g,
                                           SemigroupPath path = SemigroupPath::Spectral, double h_flow = 1e-3) {
    detail::require_grid(g, phi);
    require(m.dim == g.dim && F.dim == g.dim, "frozen semigroup: dimension mismatch");
    require(s > t, "frozen semigroup: needs s > t");
    require(pair.tau <= t, "frozen semigroup: needs tau <= t");
    const Point b = frozen_shift(F, pair.tau, pair.xi, t, s, {0, 0}, h_flow);
    if (path == SemigroupPath::Spectral) return apply_multiplier(g, phi, detail::propagator(m, s - t, b));

    const double lag = s - t;
    const double Lk = (g.dim == 1 ? 8 : 2) * 2 * g.half_extent;
    const std::size_t cap = g.dim == 1 ? std::size_t{1} << 20 : std::size_t{1} << 10;
    // spacing: the finer of the admissible one at this lag and a quarter of the torus spacing
    const double h_need = std::min(admissible_grid(m, lag, 1024).spacing(), g.spacing() / 4);
    std::size_t Nk = 64;
    while (Nk < cap && 2 * Lk / static_cast<double>(Nk) > h_need) Nk *= 2;
    const DensityField k = density(m, lag, GridSpec(g.dim, Lk, Nk));
    const double w0 = k.grid.cell_volume();
    double inside = 0, mean = 0;
    for (double v : k.p) inside += v * w0;
    for (double v : phi) mean += v;
    mean /= static_cast<double>(phi.size());
    GridFunction out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point x = g.point(i);
        double acc = 0;
        for (std::size_t j = 0; j < k.grid.size(); ++j) {
            const Point z = k.grid.point(j);
            acc += k.p[j] * interp_periodic(g, phi, {x[0] + b[0] + z[0], x[1] + b[1] + z[1]});
        }
        out[i] = acc * w0 + (1 - inside) * mean;
    }
    return out;
}

struct SmoothingReport {
    std::vector<double> lags, sup_d1, sup_d2;
    double slope1 = 0, slope2 = 0;
    double theory1 = 0, theory2 = 0;  // (beta - l) / alpha
    Verdict verdict = Verdict::Fail;  // Pass: |slope1 - theory1| <= 0.05 and |slope2 - theory2| <= 0.07
};

/// sup |D^l P~_{t+lag,t} phi| over a lag ladder and the fitted log-log slopes, l = 1, 2.
/// In 2d the gradient norm is Euclidean and the Hessian norm Frobenius.
inline SmoothingReport smoothing_probe(const StableModel& m, const DriftField& F, const FreezingPair& pair, double beta,
                                       const std::vector<double>& lags, const GridFunction& phi, const GridSpec& g,
                                       double t = 0) {
    require(beta > 0 && beta < 1, "smoothing probe: beta must lie in (0,1)");
    require(lags.size() >= 2, "smoothing probe: need at least two lags");
    detail::require_grid(g, phi);
    SmoothingReport r;
    r.theory1 = (beta - 1) / m.alpha;
    r.theory2 = (beta - 2) / m.alpha;
    if (m.kind == Kind::Cylindrical && m.dim == 2 && beta >= m.alpha) {
        r.verdict = Verdict::Divergent;
        return r;
    }
    require(pair.tau <= t, "smoothing probe: needs tau <= t");
    const CField sp = to_spectrum(g, phi);
    for (double lag : lags) {
        require(lag > 0, "smoothing probe: lags must be positive");
        const Point b = frozen_shift(F, pair.tau, pair.xi, t, t + lag, {0, 0});
        r.lags.push_back(lag);
        std::vector<GridFunction> d1, d2;
        for (int a = 0; a < g.dim; ++a) d1.push_back(apply_multiplier(g, sp, detail::propagator(m, lag, b, 0, a)));
        for (int a = 0; a < g.dim; ++a)
            for (int c = a; c < g.dim; ++c)
                d2.push_back(apply_multiplier(g, sp, [&, a, c](const Point& l) {
                    return detail::propagator(m, lag, b)(l) * cplx(-l[a] * l[c], 0);
                }));
        double s1 = 0, s2 = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g.dim == 1) {
                s1 = std::max(s1, std::abs(d1[0][i]));
                s2 = std::max(s2, std::abs(d2[0][i]));
            } else {
                s1 = std::max(s1, std::hypot(d1[0][i], d1[1][i]));
                s2 = std::max(s2, std::sqrt(d2[0][i] * d2[0][i] + 2 * d2[1][i] * d2[1][i] + d2[2][i] * d2[2][i]));
            }
        }
        r.sup_d1.push_back(s1);
        r.sup_d2.push_back(s2);
    }
    const auto positive = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return x > 0; });
    };
    if (!positive(r.sup_d1) || !positive(r.sup_d2)) {
        // derivatives vanish identically (constant phi): no exponent to fit
        r.slope1 = r.slope2 = NAN;
        return r;
    }
    r.slope1 = loglog_slope(r.lags, r.sup_d1);
    r.slope2 = loglog_slope(r.lags, r.sup_d2);
    const bool ok = std::abs(r.slope1 - r.theory1) <= 0.05 && std::abs(r.slope2 - r.theory2) <= 0.07;
    r.verdict = ok ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------------------------------------
// Duhamel proxy

struct TimeMesh {
    std::size_t slices = 32;  // output times t_k = k T / slices
    std::size_t nodes = 64;   // graded nodes per time integral
    double grading = 0;       // exponent q of s - t = (T - t) sigma^q; 0 picks alpha / (alpha + beta - 1)
    double h_flow = 1e-3;     // step of the frozen flow
};

inline double required_grading(const Problem& P) { return P.model.alpha / (P.model.alpha + P.beta - 1); }

/// u~(t,x) = P~_{T,t} g(x) + int_t^T P~_{s,t} f(s,.)(x) ds for one freezing pair.
inline SpaceTimeField duhamel_proxy(const Problem& P, const FreezingPair& pair, const TimeMesh& mesh = {}) {
    P.validate();
    require(P.model.alpha + P.beta > 1, "duhamel proxy: needs alpha + beta > 1");
    require(mesh.slices >= 3, "duhamel proxy: need at least three slices");
    const double q = mesh.grading > 0 ? mesh.grading : required_grading(P);
    require(q >= required_grading(P) - 1e-12,
            "duhamel proxy: time mesh does not refine near s = t (grading exponent below alpha/(alpha+beta-1))");
    require(pair.tau >= 0 && pair.tau <= P.T, "duhamel proxy: tau must lie in [0,T]");

    // theta_{s,tau}(xi); before tau the path sits at xi
    const auto path = integrate_flow(P.drift, pair.tau, pair.xi, P.T, mesh.h_flow, false);
    auto shift = [&](double t, double s) {
        const Point a = path.at(s), c = path.at(t);
        return Point{a[0] - c[0], a[1] - c[1]};
    };
    const GridSpec& g = P.grid;
    const CField gs = to_spectrum(g, detail::sample_terminal(P));

    SpaceTimeField out;
    out.grid = g;
    for (std::size_t k = 0; k <= mesh.slices; ++k) out.times.push_back(P.T * k / mesh.slices);
    out.times.back() = P.T;
    out.u.assign(out.times.size(), {});
    out.u.back() = detail::sample_terminal(P);
    for (std::size_t k = 0; k + 1 < out.times.size(); ++k) {
        const double t = out.times[k];
        GridFunction acc = apply_multiplier(g, gs, detail::propagator(P.model, P.T - t, shift(t, P.T)));
        for (const auto& nd : detail::graded_mesh(t, P.T, mesh.nodes, q)) {
            const GridFunction v = apply_multiplier(g, detail::sample_source(P, nd.s),
                                                    detail::propagator(P.model, nd.s - t, shift(t, nd.s)));
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += nd.w * v[i];
        }
        out.u[k] = std::move(acc);
    }
    out.finalize();
    return out;
}

// ---------------------------------------------------------------------------------------------
// Remainders of the localized equation

struct RemainderFields {
    GridFunction R, S;
    GridFunction carre_du_champ;  // int (u(x+y)-u(x)) (eta(x+y)-eta(x)) nu(dy)
    GridFunction eta;
};

/// R = [F(t,x) - F(t, theta_{t,tau}(xi))].Du(t,x) eta(t,x) and S = -u L eta - Gamma(u, eta) at a slice time t.
/// Gamma(u, eta) = L(u eta) - u L eta - eta L u, with L applied along the chosen path of levy_apply.
inline RemainderFields remainder_eval(const Problem& P, const FreezingPair& pair, const SpaceTimeField& u,
                                      const CutoffSpec& cutoff, double t, bool quadrature = false,
                                      double h_flow = 1e-3) {
    P.validate();
    require(pair.tau <= t, "remainder: needs tau <= t");
    const std::size_t k = u.slice_index(t);
    require(!u.grad.empty(), "remainder: field has no gradient data");
    const GridSpec& g = P.grid;
    const auto& uk = u.u[k];
    const Point c = integrate_flow(P.drift, pair.tau, pair.xi, t, h_flow, false).end();

    RemainderFields r;
    if (cutoff.global) {
        r.eta.assign(g.size(), 1.0);
    } else {
        require(cutoff.radius > 0, "cutoff radius must be positive");
        for (int a = 0; a < g.dim; ++a)
            if (std::abs(c[a]) + 2 * cutoff.radius > g.half_extent)
                throw NumericalGuard("remainder: cutoff support around the frozen flow leaves the grid (center " +
                                     std::to_string(c[a]) + ", radius " + std::to_string(cutoff.radius) + ")");
        r.eta = sample(g, [&](const Point& y) {
            return CutoffSpec::profile(norm({y[0] - c[0], y[1] - c[1]}, g.dim) / cutoff.radius);
        });
    }
    const Point Fc = P.drift(t, c);
    r.R.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point Fx = P.drift(t, g.point(i));
        double dot = 0;
        for (int a = 0; a < g.dim; ++a) dot += (Fx[a] - Fc[a]) * u.grad[k][a][i];
        r.R[i] = dot * r.eta[i];
    }
    auto L = [&](const GridFunction& v) {
        return quadrature ? levy_apply_quadrature(P.model, v, g) : levy_apply_spectral(P.model, v, g);
    };
    GridFunction prod(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) prod[i] = uk[i] * r.eta[i];
    const GridFunction Lu = L(uk), Leta = L(r.eta), Lprod = L(prod);
    r.carre_du_champ.resize(g.size());
    r.S.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        r.carre_du_champ[i] = Lprod[i] - uk[i] * Leta[i] - r.eta[i] * Lu[i];
        r.S[i] = -uk[i] * Leta[i] - r.carre_du_champ[i];
    }
    return r;
}

// ---------------------------------------------------------------------------------------------
// Full solver: Picard iteration with freezing at the evaluation point

struct FullOptions {
    std::size_t slices = 32;
    std::size_t nodes = 64;
    double tol = 1e-6;         // on sup |u^{n+1} - u^n| and sup |Du^{n+1} - Du^n|
    std::size_t max_iter = 30;
    double h_flow = 2e-3;
    double max_contraction = 0.5;
};

struct FullSolution {
    SpaceTimeField u;
    std::size_t subintervals = 1;
    std::vector<std::size_t> iterations;            // per subinterval, earliest last
    std::vector<std::vector<double>> contraction;   // per subinterval: sup change ratios
    double change_u = 0, change_du = 0;             // final Picard increments of the first subinterval solved
};

namespace detail {

// Flow data of the starts (t_k, x_i) on one subinterval [a, b].
struct PointFlows {
    std::vector<std::vector<GradedNode>> nodes;           // [k][j]
    std::vector<std::vector<std::vector<Point>>> pos;     // [k][j][i]: theta_{s_j, t_k}(x_i)
    std::vector<std::vector<std::vector<Point>>> drift;   // [k][j][i]: F_delta(s_j, theta)
    std::vector<std::vector<Point>> end;                  // [k][i]: theta_{b, t_k}(x_i)
};

inline PointFlows point_flows(const Problem& P, const std::vector<double>& times, std::size_t nodes, double q,
                              double h) {
    const GridSpec& g = P.grid;
    const DriftField G = flow_drift(P.drift, h);
    const double b = times.back();
    PointFlows pf;
    const std::size_t K = times.size() - 1;
    pf.nodes.resize(K);
    pf.pos.resize(K);
    pf.drift.resize(K);
    pf.end.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = times[k];
        pf.nodes[k] = graded_mesh(t, b, nodes, q);
        const std::size_t n = even_steps(b - t, h);
        const double step = (b - t) / static_cast<double>(n);
        pf.pos[k].assign(nodes, std::vector<Point>(g.size()));
        pf.drift[k].assign(nodes, std::vector<Point>(g.size()));
        pf.end[k].resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto tr = rk4(G, t, g.point(i), step, n);
            pf.end[k][i] = tr.back();
            for (std::size_t j = 0; j < nodes; ++j) {
                const double s = (pf.nodes[k][j].s - t) / step;
                const long m = std::clamp(static_cast<long>(std::floor(s)) - 1, 0L, static_cast<long>(n) - 3);
                double w[4];
                cubic_weights(s - static_cast<double>(m) - 1, w);
                Point p{0, 0};
                for (int c = 0; c < 4; ++c)
                    for (int a = 0; a < 2; ++a) p[a] += w[c] * tr[m + c][a];
                pf.pos[k][j][i] = p;
                pf.drift[k][j][i] = G(pf.nodes[k][j].s, p);
            }
        }
    }
    return pf;
}

inline double grad_change(const std::vector<std::vector<GridFunction>>& a, const std::vector<std::vector<GridFunction>>& b) {
    double w = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t c = 0; c < a[k].size(); ++c)
            for (std::size_t i = 0; i < a[k][c].size(); ++i) w = std::max(w, std::abs(a[k][c][i] - b[k][c][i]));
    return w;
}

struct SubintervalResult {
    std::vector<GridFunction> u;
    std::size_t iterations = 0;
    std::vector<double> contraction;
    double change_u = 0, change_du = 0;
    bool converged = false;
};

// Picard sweep on [times.front(), times.back()] with terminal slice gT.
inline SubintervalResult picard_subinterval(const Problem& P, const std::vector<double>& times, const GridFunction& gT,
                                            const FullOptions& opt, double q) {
    const GridSpec& g = P.grid;
    const std::size_t K = times.size() - 1;
    const double b = times.back(), dt = times[1] - times[0];
    const PointFlows pf = point_flows(P, times, opt.nodes, q, opt.h_flow);
    auto at = [&](const GridFunction& field, const Point& x) { return interp_periodic(g, field, x); };

    // frozen part: (P_{b-t} gT)(theta_{b,t}(x)) + int (P_{s-t} f(s))(theta_{s,t}(x)) ds
    const CField gs = to_spectrum(g, gT);
    std::vector<GridFunction> base(K + 1);
    base[K] = gT;
    for (std::size_t k = 0; k < K; ++k) {
        const double t = times[k];
        const GridFunction Pg = apply_multiplier(g, gs, propagator(P.model, b - t, {0, 0}));
        base[k].resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) base[k][i] = at(Pg, pf.end[k][i]);
        for (std::size_t j = 0; j < pf.nodes[k].size(); ++j) {
            const auto& nd = pf.nodes[k][j];
            const GridFunction Pf = apply_multiplier(g, sample_source(P, nd.s), propagator(P.model, nd.s - t, {0, 0}));
            for (std::size_t i = 0; i < g.size(); ++i) base[k][i] += nd.w * at(Pf, pf.pos[k][j][i]);
        }
    }

    SubintervalResult res;
    std::vector<GridFunction> u = base;
    auto gradients = [&](const std::vector<GridFunction>& v) {
        std::vector<std::vector<GridFunction>> out(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) {
            const CField sp = to_spectrum(g, v[k]);
            for (int a = 0; a < g.dim; ++a) out[k].push_back(spectral_derivative(g, sp, a));
        }
        return out;
    };
    auto du = gradients(u);
    double prev = 0;
    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
        // remainder with freezing at the evaluation point:
        // int (P_{s-t} [(F(s,.) - F_delta(s, theta)) . Du(s,.)])(theta) ds
        std::vector<GridFunction> next = base;
        std::vector<std::vector<GridFunction>> by_axis(g.dim, std::vector<GridFunction>(K + 1));
        for (int a = 0; a < g.dim; ++a)
            for (std::size_t m = 0; m <= K; ++m) by_axis[a][m] = du[m][a];
        std::vector<GridFunction> dcomp(g.dim);
        for (std::size_t k = 0; k < K; ++k) {
            const double t = times[k];
            for (std::size_t j = 0; j < pf.nodes[k].size(); ++j) {
                const auto& nd = pf.nodes[k][j];
                GridFunction FDu(g.size(), 0.0);
                for (int a = 0; a < g.dim; ++a) dcomp[a] = time_interp(by_axis[a], times[0], dt, nd.s);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const Point Fy = P.drift(nd.s, g.point(i));
                    for (int a = 0; a < g.dim; ++a) FDu[i] += Fy[a] * dcomp[a][i];
                }
                const auto prop = propagator(P.model, nd.s - t, {0, 0});
                const GridFunction A = apply_multiplier(g, FDu, prop);
                std::vector<GridFunction> B;
                for (int a = 0; a < g.dim; ++a) B.push_back(apply_multiplier(g, dcomp[a], prop));
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const Point& th = pf.pos[k][j][i];
                    double r = at(A, th);
                    for (int a = 0; a < g.dim; ++a) r -= pf.drift[k][j][i][a] * at(B[a], th);
                    next[k][i] += nd.w * r;
                }
            }
        }
        double change = 0;
        for (std::size_t k = 0; k <= K; ++k)
            for (std::size_t i = 0; i < g.size(); ++i) change = std::max(change, std::abs(next[k][i] - u[k][i]));
        auto dnext = gradients(next);
        const double dchange = grad_change(dnext, du);
        const double level = std::max(change, dchange);
        if (it > 1) res.contraction.push_back(prev > 0 ? level / prev : 0.0);
        prev = level;
        u = std::move(next);
        du = std::move(dnext);
        res.iterations = it;
        res.change_u = change;
        res.change_du = dchange;
        if (change <= opt.tol && dchange <= opt.tol) {
            res.converged = true;
            break;
        }
        if (res.contraction.size() >= 2 && res.contraction.back() > opt.max_contraction) break;
    }
    res.u = std::move(u);
    return res;
}

}  // namespace detail

/// Picard iteration on the Duhamel representation with freezing (tau, xi) = (t, x) at every
/// evaluation point; the cutoff is global (eta = 1), so the remainder is [F - F(theta)].Du and S = 0.
/// The horizon is split into 1, 2, 4, ... subintervals, solved backward from T, until every
/// subinterval converges with contraction factor <= max_contraction.
inline FullSolution solve_full(const Problem& P, const FullOptions& opt = {}) {
    P.validate();
    require(P.model.alpha + P.beta > 1, "solve_full: needs alpha + beta > 1");
    require(opt.slices >= 4 && (opt.slices & (opt.slices - 1)) == 0, "solve_full: slices must be a power of two >= 4");
    const double q = required_grading(P);
    const GridFunction g0 = detail::sample_terminal(P);
    std::vector<std::vector<double>> history;
    for (std::size_t parts = 1; parts <= opt.slices / 4; parts *= 2) {
        FullSolution sol;
        sol.subintervals = parts;
        const std::size_t per = opt.slices / parts;
        std::vector<GridFunction> slices(opt.slices + 1);
        slices.back() = g0;
        bool ok = true;
        for (std::size_t p = parts; p-- > 0;) {
            std::vector<double> times;
            for (std::size_t k = 0; k <= per; ++k) times.push_back(P.T * static_cast<double>(p * per + k) / opt.slices);
            const auto r = detail::picard_subinterval(P, times, slices[(p + 1) * per], opt, q);
            history.push_back(r.contraction);
            sol.iterations.push_back(r.iterations);
            sol.contraction.push_back(r.contraction);
            sol.change_u = std::max(sol.change_u, r.change_u);
            sol.change_du = std::max(sol.change_du, r.change_du);
            if (!r.converged) {
                ok = false;
                break;
            }
            for (std::size_t k = 0; k < per; ++k) slices[p * per + k] = r.u[k];
        }
        if (!ok) continue;
        std::reverse(sol.iterations.begin(), sol.iterations.end());
        std::reverse(sol.contraction.begin(), sol.contraction.end());
        sol.u.grid = P.grid;
        for (std::size_t k = 0; k <= opt.slices; ++k) sol.u.times.push_back(P.T * k / opt.slices);
        sol.u.u = std::move(slices);
        sol.u.finalize();
        return sol;
    }
    std::string msg = "solve_full: no convergence within " + std::to_string(opt.max_iter) +
                      " iterations on any subdivision; contraction history:";
    for (const auto& h : history) {
        msg += " [";
        for (double c : h) msg += " " + std::to_string(c);
        msg += " ]";
    }
    throw NumericalGuard(msg);
}

// ---------------------------------------------------------------------------------------------
// Vanishing-viscosity reference solver

struct ViscosityOptions {
    std::size_t slices = 32;
    double time_step = 1e-3;
};

/// Backward Strang splitting for d_t u + (L + eps Delta^{1/2}) u + F.D u = -f: half spectral step,
/// semi-Lagrangian drift step along the flow of F mollified at time_step^{1/(1-beta)} with the
/// source integrated by the trapezoid rule along the characteristic, half spectral step.
inline SpaceTimeField solve_viscosity(const Problem& P, double eps, const ViscosityOptions& opt = {}) {
    P.validate();
    require(eps >= 0 && std::isfinite(eps), "solve_viscosity: eps must be >= 0");
    require(opt.slices >= 1 && opt.time_step > 0, "solve_viscosity: bad time discretization");
    const GridSpec& g = P.grid;
    const double slice_dt = P.T / static_cast<double>(opt.slices);
    const auto sub = static_cast<std::size_t>(std::ceil(slice_dt / opt.time_step - 1e-9));
    const double dt = slice_dt / static_cast<double>(sub);

    double fsup = 0;
    for (std::size_t i = 0; i < g.size(); ++i) fsup = std::max(fsup, norm(P.drift(0, g.point(i)), g.dim));
    if (P.drift.bounded) fsup = std::max(fsup, P.drift.sup);
    if (dt * fsup > g.half_extent / 4)
        throw NumericalGuard("solve_viscosity: CFL guard dt*sup|F| = " + std::to_string(dt * fsup) +
                             " exceeds a quarter of the half-extent");

    const DriftField G = flow_drift(P.drift, dt);
    const std::size_t nsub = detail::even_steps(dt, dt);
    const auto half = detail::propagator(P.model, dt / 2, {0, 0}, eps);

    SpaceTimeField out;
    out.grid = g;
    out.times.resize(opt.slices + 1);
    out.u.resize(opt.slices + 1);
    GridFunction u = detail::sample_terminal(P);
    out.times.back() = P.T;
    out.u.back() = u;
    for (std::size_t k = opt.slices; k-- > 0;) {
        for (std::size_t q = sub; q-- > 0;) {
            const double t = P.T * static_cast<double>(k) / opt.slices + static_cast<double>(q) * dt;
            u = apply_multiplier(g, u, half);
            GridFunction v(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const Point x = g.point(i);
                const Point X = detail::rk4(G, t, x, dt / static_cast<double>(nsub), nsub).back();
                v[i] = interp_periodic(g, u, X) + 0.5 * dt * (P.f(t, x) + P.f(t + dt, X));
            }
            u = apply_multiplier(g, v, half);
        }
        out.times[k] = P.T * static_cast<double>(k) / opt.slices;
        out.u[k] = u;
    }
    out.finalize();
    return out;
}

struct ViscosityLadder {
    std::vector<double> eps;
    std::vector<SpaceTimeField> solutions;
    std::vector<SpaceTimeField> extrapolations;  // linear in eps through consecutive levels
    double last_change = 0;                      // sup |E_last - E_previous| over all slices
};

/// Runs the eps ladder and extrapolates linearly to eps = 0 from each consecutive pair.
inline ViscosityLadder viscosity_extrapolation(const Problem& P, const std::vector<double>& eps = {0.04, 0.02, 0.01},
                                               const ViscosityOptions& opt = {}) {
    require(eps.size() >= 2, "viscosity ladder: need at least two levels");
    for (std::size_t i = 1; i < eps.size(); ++i)
        require(eps[i] < eps[i - 1] && eps[i] > 0, "viscosity ladder: levels must decrease and stay positive");
    ViscosityLadder L;
    L.eps = eps;
    for (double e : eps) L.solutions.push_back(solve_viscosity(P, e, opt));
    for (std::size_t i = 1; i < eps.size(); ++i) {
        const double e1 = eps[i - 1], e2 = eps[i];
        SpaceTimeField E = L.solutions[i];
        for (std::size_t k = 0; k < E.u.size(); ++k)
            for (std::size_t j = 0; j < E.u[k].size(); ++j)
                E.u[k][j] = (e1 * L.solutions[i].u[k][j] - e2 * L.solutions[i - 1].u[k][j]) / (e1 - e2);
        E.finalize();
        L.extrapolations.push_back(std::move(E));
    }
    if (L.extrapolations.size() >= 2) {
        const auto& a = L.extrapolations.back();
        const auto& b = L.extrapolations[L.extrapolations.size() - 2];
        for (std::size_t k = 0; k < a.u.size(); ++k)
            for (std::size_t j = 0; j < a.u[k].size(); ++j) L.last_change = std::max(L.last_change, std::abs(a.u[k][j] - b.u[k][j]));
    }
    return L;
}

inline double sup_gap(const SpaceTimeField& a, const SpaceTimeField& b) {
    require(a.u.size() == b.u.size() && a.grid.size() == b.grid.size(), "sup gap: fields on different meshes");
    double w = 0;
    for (std::size_t k = 0; k < a.u.size(); ++k)
        for (std::size_t i = 0; i < a.u[k].size(); ++i) w = std::max(w, std::abs(a.u[k][i] - b.u[k][i]));
    return w;
}

// ---------------------------------------------------------------------------------------------
// Integral identity u(t) = u(s) + int_t^s (f + (L + eps Delta^{1/2} + F.D) u) dv

struct ResidualOptions {
    double eps = 0;                       // viscosity included in the operator
    std::optional<FreezingPair> frozen;   // drift frozen along theta_{v,tau}(xi)
    double h_flow = 1e-3;
    bool quadrature = false;              // levy_apply path for L u
};

struct ResidualReport {
    double sup = 0, l2 = 0;   // normalized by ||f||_inf + ||g||_inf
    double normalizer = 0;
    std::size_t samples = 0;
};

/// Evaluates the identity for slice pairs (t_k, t_{k+2}), (t_k, t_{k+4}) and (t_0, t_last)
/// (when the slice count is even) at every grid point; time integrals by Simpson's rule.
inline ResidualReport residual_check(const SpaceTimeField& u, const Problem& P, const ResidualOptions& opt = {}) {
    P.validate();
    require(u.times.size() >= 3, "residual check: need at least three slices");
    require(!u.grad.empty(), "residual check: field has no gradient data");
    const GridSpec& g = u.grid;
    const std::size_t K = u.times.size() - 1;
    const double dt = u.times[1] - u.times[0];
    for (std::size_t k = 1; k <= K; ++k)
        require(std::abs(u.times[k] - u.times[k - 1] - dt) <= 1e-9 * dt, "residual check: slices must be uniform");

    std::optional<FlowTrajectory> path;
    if (opt.frozen) path = integrate_flow(P.drift, opt.frozen->tau, opt.frozen->xi, P.T, opt.h_flow, false);

    // integrand per slice
    std::vector<GridFunction> rhs(K + 1);
    double fnorm = 0;
    for (std::size_t k = 0; k <= K; ++k) {
        const double t = u.times[k];
        GridFunction Lu = opt.quadrature ? levy_apply_quadrature(P.model, u.u[k], g)
                                         : apply_multiplier(g, u.u[k], [&](const Point& l) {
                                               return cplx(symbol(P.model, l) - opt.eps * std::hypot(l[0], l[1]), 0);
                                           });
        if (opt.quadrature && opt.eps > 0) {
            const GridFunction half = apply_multiplier(g, u.u[k], [](const Point& l) { return cplx(-std::hypot(l[0], l[1]), 0); });
            for (std::size_t i = 0; i < g.size(); ++i) Lu[i] += opt.eps * half[i];
        }
        const Point Fc = path ? P.drift(t, path->at(t)) : Point{0, 0};
        rhs[k].resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Point x = g.point(i);
            const Point F = path ? Fc : P.drift(t, x);
            double drift = 0;
            for (int a = 0; a < g.dim; ++a) drift += F[a] * u.grad[k][a][i];
            const double fv = P.f(t, x);
            fnorm = std::max(fnorm, std::abs(fv));
            rhs[k][i] = fv + Lu[i] + drift;
        }
    }
    ResidualReport rep;
    rep.normalizer = fnorm + sup_norm(detail::sample_terminal(P));
    require(rep.normalizer > 0, "residual check: f and g vanish; nothing to normalize by");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t k = 0; k + 2 <= K; k += 2) pairs.emplace_back(k, k + 2);
    for (std::size_t k = 0; k + 4 <= K; k += 4) pairs.emplace_back(k, k + 4);
    if (K % 2 == 0) pairs.emplace_back(0, K);
    double sq = 0;
    for (const auto& [a, b] : pairs) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            std::vector<double> y;
            for (std::size_t k = a; k <= b; ++k) y.push_back(rhs[k][i]);
            const double res = std::abs(u.u[a][i] - u.u[b][i] - simpson(y, dt)) / rep.normalizer;
            rep.sup = std::max(rep.sup, res);
            sq += res * res;
            ++rep.samples;
        }
    }
    rep.l2 = std::sqrt(sq / static_cast<double>(rep.samples));
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Reference data and export

/// f(t,x) = a cos(x_1).
inline SourceFn cos_source(double a = 1.0) {
    return [a](double, const Point& x) { return a * std::cos(x[0]); };
}

/// g(x) = exp(1 - 1/(1 - |x - c|^2 / r^2)) inside the ball, 0 outside; value 1 at the center.
inline TerminalFn smoothed_bump(double r = 1.0, Point c = {0, 0}, int dim = 1) {
    return [r, c, dim](const Point& x) {
        const double z = norm({x[0] - c[0], x[1] - c[1]}, dim) / r;
        return z >= 1 ? 0.0 : std::exp(1 - 1 / (1 - z * z));
    };
}

/// d = 1, isotropic alpha = 0.7, beta = 0.5, T = 0.25, Hoelder bump drift, cos source,
/// smoothed bump terminal data, on the torus of length 2 pi with n points.
inline Problem reference_problem(std::size_t n = 512) {
    Problem P;
    P.model = isotropic(0.7, 1);
    P.drift = holder_bump(1.0, 0.5);
    P.f = cos_source();
    P.g = smoothed_bump();
    P.T = 0.25;
    P.beta = 0.5;
    P.grid = GridSpec(1, M_PI, n);
    return P;
}

/// "SIPS1", dim, N, L, slice count, times, then u and the gradient components per slice.
inline void write_space_time(const SpaceTimeField& u, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "write_space_time: cannot open " + path);
    auto put = [&](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    os.write("SIPS1", 5);
    put(static_cast<std::int32_t>(u.grid.dim));
    put(static_cast<std::uint64_t>(u.grid.n));
    put(u.grid.half_extent);
    put(static_cast<std::uint64_t>(u.times.size()));
    for (double t : u.times) put(t);
    auto arr = [&](const GridFunction& f) { os.write(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(double)); };
    for (std::size_t k = 0; k < u.u.size(); ++k) {
        arr(u.u[k]);
        for (const auto& d : u.grad[k]) arr(d);
    }
    require(static_cast<bool>(os), "write_space_time: write failed for " + path);
}

inline SpaceTimeField read_space_time(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "read_space_time: cannot open " + path);
    char magic[5];
    is.read(magic, 5);
    require(is && std::memcmp(magic, "SIPS1", 5) == 0, "read_space_time: bad magic in " + path);
    auto get = [&](auto& v) { is.read(reinterpret_cast<char*>(&v), sizeof(v)); };
    std::int32_t dim;
    std::uint64_t N, K;
    double L;
    get(dim);
    get(N);
    get(L);
    get(K);
    require(static_cast<bool>(is) && K > 0 && K < (1u << 24), "read_space_time: bad header in " + path);
    SpaceTimeField u;
    u.grid = GridSpec(dim, L, N);
    u.times.resize(K);
    for (auto& t : u.times) get(t);
    auto arr = [&] {
        GridFunction f(u.grid.size());
        is.read(reinterpret_cast<char*>(f.data()), f.size() * sizeof(double));
        return f;
    };
    for (std::size_t k = 0; k < K; ++k) {
        u.u.push_back(arr());
        u.grad.emplace_back();
        for (int a = 0; a < dim; ++a) u.grad.back().push_back(arr());
        u.sup.push_back(sup_norm(u.u.back()));
    }
    require(static_cast<bool>(is), "read_space_time: truncated data in " + path);
    return u;
}

}  // namespace stablab
