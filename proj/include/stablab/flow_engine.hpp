#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "quadrature.hpp"

namespace stablab {

/// Drift F(t,x) with its declared Hoelder data: |F(t,x) - F(t,x')| <= K0 |x-x'|^beta
/// for |x-x'| <= 1 inside the ball of radius locality_radius.
struct DriftField {
    std::string name = "zero";
    int dim = 1;
    std::function<Point(double, const Point&)> eval;
    double beta = 0.5;
    double K0 = 0;
    double locality_radius = INFINITY;
    bool bounded = true;
    double sup = 0;       // INFINITY for unbounded drifts
    bool smooth = false;  // Lipschitz: integrated directly, no mollification
    double mollified_at = 0;

    Point operator()(double t, const Point& x) const {
        const Point v = eval(t, x);
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]))
            throw NumericalGuard("drift '" + name + "' is not finite at t=" + std::to_string(t) + ", x=(" +
                                 std::to_string(x[0]) + "," + std::to_string(x[1]) + ")");
        return v;
    }
};

namespace detail {

inline void check_holder_data(double beta, double K0) {
    require(beta > 0 && beta < 1, "drift: beta must lie in (0,1)");
    require(K0 >= 0 && std::isfinite(K0), "drift: K0 must be finite and >= 0");
}

}  // namespace detail

inline DriftField zero_drift(int dim) {
    DriftField F;
    F.dim = dim;
    F.eval = [](double, const Point&) { return Point{0, 0}; };
    F.smooth = true;
    return F;
}

inline DriftField constant_drift(std::vector<double> b) {
    require(b.size() == 1 || b.size() == 2, "constant drift: vector must have 1 or 2 components");
    DriftField F;
    F.name = "constant";
    F.dim = static_cast<int>(b.size());
    const Point v{b[0], b.size() == 2 ? b[1] : 0.0};
    F.eval = [v](double, const Point&) { return v; };
    F.sup = std::hypot(v[0], v[1]);
    F.smooth = true;
    return F;
}

/// F(x) = A x (Ornstein-Uhlenbeck drift), row-major A of size d x d. K0 is the operator norm.
inline DriftField linear_drift(std::vector<double> A, double beta = 0.5) {
    detail::check_holder_data(beta, 0);
    require(A.size() == 1 || A.size() == 4, "linear drift: matrix must be 1x1 or 2x2");
    DriftField F;
    F.name = "linear";
    F.dim = A.size() == 1 ? 1 : 2;
    F.beta = beta;
    if (F.dim == 1) {
        const double a = A[0];
        F.eval = [a](double, const Point& x) { return Point{a * x[0], 0.0}; };
        F.K0 = std::abs(a);
    } else {
        F.eval = [A](double, const Point& x) { return Point{A[0] * x[0] + A[1] * x[1], A[2] * x[0] + A[3] * x[1]}; };
        // largest singular value from the eigenvalues of A^T A
        const double p = A[0] * A[0] + A[2] * A[2], q = A[0] * A[1] + A[2] * A[3], r = A[1] * A[1] + A[3] * A[3];
        F.K0 = std::sqrt(0.5 * (p + r) + std::sqrt(0.25 * (p - r) * (p - r) + q * q));
    }
    F.bounded = F.K0 == 0;
    F.sup = F.bounded ? 0 : INFINITY;
    F.smooth = true;
    return F;
}

/// F(x) = K0 (1 - |x - c|)_+^beta e_1: bounded, compactly supported, beta-Hoelder at the rim.
inline DriftField holder_bump(double K0, double beta, Point center = {0, 0}, int dim = 1) {
    detail::check_holder_data(beta, K0);
    DriftField F;
    F.name = "holder_bump";
    F.dim = dim;
    F.beta = beta;
    F.K0 = K0;
    F.sup = K0;
    F.eval = [=](double, const Point& x) {
        const double r = norm({x[0] - center[0], x[1] - center[1]}, dim);
        return Point{K0 * std::pow(std::max(0.0, 1 - r), beta), 0.0};
    };
    return F;
}

/// F(x) = K0 min(|x - c|, 1)^beta e_1: beta-Hoelder cusp at the centre.
inline DriftField holder_cusp(double K0, double beta, Point center = {0, 0}, int dim = 1) {
    detail::check_holder_data(beta, K0);
    DriftField F;
    F.name = "holder_cusp";
    F.dim = dim;
    F.beta = beta;
    F.K0 = K0;
    F.sup = K0;
    F.eval = [=](double, const Point& x) {
        const double r = norm({x[0] - center[0], x[1] - center[1]}, dim);
        return Point{K0 * std::pow(std::min(r, 1.0), beta), 0.0};
    };
    return F;
}

/// F(x) = K0 |x|^beta e_1: unbounded and globally beta-Hoelder; from x = 0 the flow is not unique.
inline DriftField power_drift(double K0, double beta, int dim = 1) {
    detail::check_holder_data(beta, K0);
    DriftField F;
    F.name = "power";
    F.dim = dim;
    F.beta = beta;
    F.K0 = K0;
    F.bounded = false;
    F.sup = INFINITY;
    F.eval = [=](double, const Point& x) { return Point{K0 * std::pow(norm(x, dim), beta), 0.0}; };
    return F;
}

/// F_i(x) = c + a sin(x_i): smooth, with sup growing with the offset c while K0 = |a| stays fixed.
inline DriftField shifted_sin(double offset, double amplitude, double beta = 0.5, int dim = 1) {
    detail::check_holder_data(beta, std::abs(amplitude));
    DriftField F;
    F.name = "shifted_sin";
    F.dim = dim;
    F.beta = beta;
    F.K0 = std::abs(amplitude);
    F.sup = std::abs(offset) + std::abs(amplitude);
    F.smooth = true;
    F.eval = [=](double, const Point& x) {
        return Point{offset + amplitude * std::sin(x[0]), dim == 2 ? offset + amplitude * std::sin(x[1]) : 0.0};
    };
    return F;
}

namespace detail {

struct BumpRule {
    std::vector<Point> z;
    std::vector<double> w;
};

// Quadrature for phi(z) = C exp(-1/(1-|z|^2)) on the unit ball. The node set is symmetric
// under z -> -z and the weights are normalized to sum to one, so constants and linear
// functions are reproduced exactly.
inline const BumpRule& bump_rule(int dim) {
    static const std::array<BumpRule, 2> rules = [] {
        auto phi = [](double r) { return r < 1 ? std::exp(-1 / (1 - r * r)) : 0.0; };
        const Rule& g = gauss_legendre<16>();
        BumpRule r1, r2;
        for (int p = 0; p < 8; ++p)  // eight panels on [-1, 1]
            for (std::size_t i = 0; i < g.x.size(); ++i) {
                const double z = -1 + 0.25 * (p + 0.5) + 0.125 * g.x[i];
                r1.z.push_back({z, 0});
                r1.w.push_back(0.125 * g.w[i] * phi(std::abs(z)));
            }
        const int nang = 24;
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double r = 0.5 * (1 + g.x[i]);
            for (int j = 0; j < nang; ++j) {
                const double a = 2 * M_PI * (j + 0.5) / nang;
                r2.z.push_back({r * std::cos(a), r * std::sin(a)});
                r2.w.push_back(0.5 * g.w[i] * r * phi(r));
            }
        }
        for (auto* r : {&r1, &r2}) {
            double s = 0;
            for (double w : r->w) s += w;
            for (double& w : r->w) w /= s;
        }
        return std::array<BumpRule, 2>{r1, r2};
    }();
    return rules[dim - 1];
}

}  // namespace detail

/// Spatial convolution with the bump scaled to radius delta.
inline DriftField mollify(const DriftField& F, double delta) {
    require(delta > 0 && std::isfinite(delta), "mollify: delta must be positive");
    require(delta < F.locality_radius, "mollify: delta must stay below the locality radius");
    DriftField G = F;
    G.name = F.name + "*mollified";
    G.smooth = true;
    G.mollified_at = delta;
    const auto base = F.eval;
    const auto& rule = detail::bump_rule(F.dim);
    G.eval = [base, delta, &rule](double t, const Point& x) {
        Point acc{0, 0};
        for (std::size_t j = 0; j < rule.z.size(); ++j) {
            const Point v = base(t, {x[0] - delta * rule.z[j][0], x[1] - delta * rule.z[j][1]});
            acc[0] += rule.w[j] * v[0];
            acc[1] += rule.w[j] * v[1];
        }
        return acc;
    };
    return G;
}

/// theta_{s,tau}(xi) on a uniform grid of an even number of steps.
struct FlowTrajectory {
    double tau = 0;
    Point xi{};
    std::vector<double> times;
    std::vector<Point> points;
    double step = 0;
    double delta = 0;              // mollification scale, 0 for Lipschitz drifts
    double integration_error = 0;  // Richardson estimate |theta_h - theta_{h/2}| / 15 at the end point
    double mollification_error = 0;  // K0 delta^beta (until - tau)

    double error() const { return integration_error + mollification_error; }
    const Point& end() const { return points.back(); }

    /// Position at time s: xi before tau, cubic interpolation inside, clamped after the end.
    Point at(double s) const {
        if (s <= tau || points.size() == 1) return xi;
        if (s >= times.back()) return points.back();
        Point out;
        for (int a = 0; a < 2; ++a) {
            std::vector<double> c(points.size());
            for (std::size_t i = 0; i < c.size(); ++i) c[i] = points[i][a];
            out[a] = interp_uniform(c, tau, step, s);
        }
        return out;
    }
};

namespace detail {

inline std::vector<Point> rk4(const DriftField& F, double t0, const Point& x0, double h, std::size_t n) {
    std::vector<Point> pts{x0};
    pts.reserve(n + 1);
    Point x = x0;
    const int d = F.dim;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) * h;
        auto shift = [&](const Point& k, double c) { return Point{x[0] + c * k[0], d == 2 ? x[1] + c * k[1] : 0.0}; };
        const Point k1 = F(t, x), k2 = F(t + h / 2, shift(k1, h / 2)), k3 = F(t + h / 2, shift(k2, h / 2)),
                    k4 = F(t + h, shift(k3, h));
        for (int a = 0; a < d; ++a) x[a] += h / 6 * (k1[a] + 2 * k2[a] + 2 * k3[a] + k4[a]);
        pts.push_back(x);
    }
    return pts;
}

inline std::size_t even_steps(double span, double h) {
    auto n = static_cast<std::size_t>(std::ceil(span / h - 1e-12));
    n = std::max<std::size_t>(n, 2);
    return n + (n % 2);
}

}  // namespace detail

/// Drift actually integrated for step h: F itself when Lipschitz, else F mollified at
/// delta = h^{1/(1-beta)}.
inline DriftField flow_drift(const DriftField& F, double h) {
    if (F.smooth) return F;
    return mollify(F, std::pow(h, 1 / (1 - F.beta)));
}

/// theta_{s,tau}(xi) = xi + int_tau^s F(v, theta_v) dv by classical Runge-Kutta.
/// The Richardson rerun at h/2 is skipped when estimate_error is false.
inline FlowTrajectory integrate_flow(const DriftField& F, double tau, const Point& xi, double until, double h,
                                     bool estimate_error = true) {
    require(until >= tau, "integrate_flow: until must be >= tau");
    require(h > 0 && std::isfinite(h), "integrate_flow: step must be positive");
    FlowTrajectory tr;
    tr.tau = tau;
    tr.xi = xi;
    if (F.dim == 1) tr.xi[1] = 0;
    if (until == tau) {
        tr.times = {tau};
        tr.points = {tr.xi};
        tr.step = h;
        return tr;
    }
    const DriftField G = flow_drift(F, h);
    tr.delta = G.mollified_at;
    const std::size_t n = detail::even_steps(until - tau, h);
    tr.step = (until - tau) / static_cast<double>(n);
    tr.points = detail::rk4(G, tau, tr.xi, tr.step, n);
    tr.times.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) tr.times[i] = tau + static_cast<double>(i) * tr.step;
    tr.times.back() = until;
    if (estimate_error) {
        const Point fine = detail::rk4(G, tau, tr.xi, tr.step / 2, 2 * n).back();
        tr.integration_error = norm({fine[0] - tr.end()[0], fine[1] - tr.end()[1]}, F.dim) / 15;
    }
    if (tr.delta > 0) tr.mollification_error = F.K0 * std::pow(tr.delta, F.beta) * (until - tau);
    return tr;
}

/// m_{s,t}^{(tau,xi)}(x) = x + int_t^s F(v, theta_{v,tau}(xi)) dv, Simpson's rule on the trajectory grid.
/// The integrand uses the same (possibly mollified) drift as the flow.
inline Point frozen_shift(const DriftField& F, double tau, const Point& xi, double t, double s, const Point& x,
                          double h = 1e-3) {
    require(tau <= t && t <= s, "frozen_shift: needs tau <= t <= s");
    Point out = x;
    if (F.dim == 1) out[1] = 0;
    if (s == t) return out;
    const DriftField G = flow_drift(F, h);
    const Point start = integrate_flow(F, tau, xi, t, h, false).end();
    const auto tr = integrate_flow(F, t, start, s, h, false);
    std::vector<double> f[2];
    for (std::size_t i = 0; i < tr.points.size(); ++i) {
        const Point v = G(tr.times[i], tr.points[i]);
        f[0].push_back(v[0]);
        f[1].push_back(v[1]);
    }
    for (int a = 0; a < F.dim; ++a) out[a] += simpson(f[a], tr.step);
    return out;
}

struct FlowPair {
    double t = 0, s = 0;
    Point x{}, xp{};
};

struct FlowStabilityReport {
    std::vector<double> ratios;     // per pair, at the given step
    double max_ratio = 0;
    double max_ratio_halved = 0;    // same pairs at step h/2
    double relative_change = 0;
};

/// R = |theta_{s,t}(x) - theta_{s,t}(x')| / (|x - x'| + (s-t)^{1/alpha}) per pair, and the
/// change of max R when the ODE step is halved.
inline FlowStabilityReport flow_stability_check(const DriftField& F, double alpha, const std::vector<FlowPair>& pairs,
                                                double h = 5e-3) {
    require(alpha > 0 && alpha < 1, "flow_stability_check: alpha must lie in (0,1)");
    require(F.smooth || alpha + F.beta > 1, "flow_stability_check: needs alpha + beta > 1");
    require(!pairs.empty(), "flow_stability_check: no pairs");
    FlowStabilityReport rep;
    auto ratio = [&](const FlowPair& p, double step) {
        const Point a = integrate_flow(F, p.t, p.x, p.s, step, false).end();
        const Point b = integrate_flow(F, p.t, p.xp, p.s, step, false).end();
        const double num = norm({a[0] - b[0], a[1] - b[1]}, F.dim);
        const double den = norm({p.x[0] - p.xp[0], p.x[1] - p.xp[1]}, F.dim) + std::pow(p.s - p.t, 1 / alpha);
        return den > 0 ? num / den : 0.0;
    };
    for (const auto& p : pairs) {
        require(0 <= p.t && p.t <= p.s && p.s <= 1, "flow_stability_check: needs 0 <= t <= s <= 1");
        require(norm({p.x[0] - p.xp[0], p.x[1] - p.xp[1]}, F.dim) <= std::min(1.0, F.locality_radius),
                "flow_stability_check: |x - x'| exceeds the Hoelder locality");
        rep.ratios.push_back(ratio(p, h));
        rep.max_ratio = std::max(rep.max_ratio, rep.ratios.back());
        rep.max_ratio_halved = std::max(rep.max_ratio_halved, ratio(p, h / 2));
    }
    rep.relative_change = std::abs(rep.max_ratio_halved - rep.max_ratio) / rep.max_ratio;
    return rep;
}

/// Pairs with 0 <= t <= s <= 1, x uniform in [-box, box]^d and |x - x'| <= 1.
inline std::vector<FlowPair> random_flow_pairs(std::size_t n, int dim, std::uint64_t seed, double box = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<FlowPair> out(n);
    for (auto& p : out) {
        p.t = U(rng);
        p.s = U(rng);
        if (p.s < p.t) std::swap(p.s, p.t);
        const double r = U(rng), a = 2 * M_PI * U(rng);
        p.x = {box * (2 * U(rng) - 1), dim == 2 ? box * (2 * U(rng) - 1) : 0.0};
        p.xp = dim == 1 ? Point{p.x[0] + (2 * r - 1), 0.0} : Point{p.x[0] + r * std::cos(a), p.x[1] + r * std::sin(a)};
    }
    return out;
}

/// Largest |F(t,x) - F(t,x')| / (K0 |x-x'|^beta) over random pairs with |x-x'| <= 1 inside the locality ball.
inline double sampled_holder_ratio(const DriftField& F, std::size_t n = 200, std::uint64_t seed = 7, double t = 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const double R = std::min(F.locality_radius, 4.0);
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Point x{R * U(rng), F.dim == 2 ? R * U(rng) : 0.0};
        Point v{U(rng), F.dim == 2 ? U(rng) : 0.0};
        const double len = norm(v, F.dim);
        if (len > 1) v = {v[0] / len, v[1] / len};
        const Point xp{x[0] + v[0], x[1] + v[1]};
        const Point a = F(t, x), b = F(t, xp);
        const double dist = norm(v, F.dim);
        if (dist == 0) continue;
        const double num = norm({a[0] - b[0], a[1] - b[1]}, F.dim);
        worst = std::max(worst, F.K0 > 0 ? num / (F.K0 * std::pow(dist, F.beta)) : (num > 0 ? INFINITY : 0.0));
    }
    return worst;
}

/// Columns s, theta_0[, theta_1].
inline void write_trajectory_csv(const FlowTrajectory& tr, int dim, const std::string& path) {
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot open " + path);
    os.precision(17);
    os << (dim == 1 ? "s,theta_0\n" : "s,theta_0,theta_1\n");
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        os << tr.times[i] << ',' << tr.points[i][0];
        if (dim == 2) os << ',' << tr.points[i][1];
        os << '\n';
    }
}

}  // namespace stablab
