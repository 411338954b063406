#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "proxy_solver.hpp"
#include "spectral_models.hpp"

namespace stablab {

struct HolderOptions {
    std::size_t pair_budget = 4096;  // random pairs on top of the dyadic axis pairs
    std::uint64_t seed = 1;
    double max_separation = 1.0;
    bool global = false;    // allow separations up to the box size (bounded fields)
    bool periodic = false;  // pairs may wrap around the torus
};

struct HolderReport {
    double gamma = 0;
    double seminorm = 0;
    double sup_norm = 0;
    std::size_t pair_count = 0;
    double max_pair_separation = 0;
};

/// Sampled seminorm sup |psi(x) - psi(x')| / |x - x'|^gamma of a (possibly vector valued) grid
/// field, Euclidean norm on the values. Pairs: every grid point against its neighbours at axis
/// separations h, 2h, 4h, ... up to the cap, plus pair_budget random pairs within the cap.
inline HolderReport holder_seminorm(const GridSpec& g, const std::vector<GridFunction>& comps, double gamma,
                                    const HolderOptions& opt = {}) {
    require(gamma > 0 && gamma <= 1, "holder_seminorm: gamma must lie in (0,1]");
    require(g.spacing() < 1, "holder_seminorm: grid spacing must be below 1");
    require(!comps.empty(), "holder_seminorm: no field");
    for (const auto& c : comps) {
        require(c.size() == g.size(), "holder_seminorm: field/grid size mismatch");
        for (double v : c) require(std::isfinite(v), "holder_seminorm: field is not finite");
    }
    const double h = g.spacing();
    const double cap = opt.global ? 2 * g.half_extent * std::sqrt(double(g.dim)) : opt.max_separation;
    const auto n = static_cast<long>(g.n);
    const long kmax = std::max(1L, static_cast<long>(std::floor(cap / h + 1e-9)));

    HolderReport r;
    r.gamma = gamma;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double s = 0;
        for (const auto& c : comps) s += c[i] * c[i];
        r.sup_norm = std::max(r.sup_norm, std::sqrt(s));
    }
    auto index = [&](long a, long b) { return g.dim == 1 ? static_cast<std::size_t>(a) : static_cast<std::size_t>(a * n + b); };
    // offset (da, db) from (a, b); false when it leaves a non-periodic grid
    auto shifted = [&](long a, long b, long da, long db, std::size_t& out) {
        long x = a + da, y = b + db;
        if (opt.periodic) {
            x = ((x % n) + n) % n;
            y = ((y % n) + n) % n;
        } else if (x < 0 || x >= n || y < 0 || (g.dim == 2 && y >= n)) {
            return false;
        }
        out = index(x, g.dim == 1 ? 0 : y);
        return true;
    };
    auto visit = [&](std::size_t i, std::size_t j, double dist) {
        double s = 0;
        for (const auto& c : comps) s += (c[i] - c[j]) * (c[i] - c[j]);
        r.seminorm = std::max(r.seminorm, std::sqrt(s) / std::pow(dist, gamma));
        r.max_pair_separation = std::max(r.max_pair_separation, dist);
        ++r.pair_count;
    };
    const long rows = n, cols = g.dim == 1 ? 1 : n;
    for (long k = 1; k <= kmax; k *= 2)
        for (long a = 0; a < rows; ++a)
            for (long b = 0; b < cols; ++b)
                for (int axis = 0; axis < g.dim; ++axis) {
                    std::size_t j;
                    if (shifted(a, b, axis == 0 ? k : 0, axis == 1 ? k : 0, j)) visit(index(a, b), j, k * h);
                }
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<long> pick(0, n - 1), off(-kmax, kmax);
    for (std::size_t q = 0; q < opt.pair_budget; ++q) {
        const long a = pick(rng), b = g.dim == 1 ? 0 : pick(rng);
        const long da = off(rng), db = g.dim == 1 ? 0 : off(rng);
        const double dist = h * std::hypot(double(da), double(db));
        if (dist == 0 || dist > cap * (1 + 1e-12)) continue;
        std::size_t j;
        if (shifted(a, b, da, db, j)) visit(index(a, b), j, dist);
    }
    return r;
}

inline HolderReport holder_seminorm(const GridSpec& g, const GridFunction& v, double gamma, const HolderOptions& opt = {}) {
    return holder_seminorm(g, std::vector<GridFunction>{v}, gamma, opt);
}

/// ||psi||_inf + [psi]_gamma for gamma <= 1.
inline double c_gamma_norm(const GridSpec& g, const GridFunction& v, double gamma, const HolderOptions& opt = {}) {
    const auto r = holder_seminorm(g, v, gamma, opt);
    return r.sup_norm + r.seminorm;
}

/// ||psi||_inf + ||D psi||_inf + [D psi]_gamma.
inline double c_one_gamma_norm(const GridSpec& g, const GridFunction& v, const std::vector<GridFunction>& grad,
                               double gamma, const HolderOptions& opt = {}) {
    const auto r = holder_seminorm(g, grad, gamma, opt);
    return sup_norm(v) + r.sup_norm + r.seminorm;
}

/// C_b^s norm for s in (0, 2), s != 1; the gradient is spectral (periodic extension).
inline double c_s_norm(const GridSpec& g, const GridFunction& v, double s, const HolderOptions& opt = {}) {
    require(s > 0 && s < 2 && s != 1, "c_s_norm: order must lie in (0,1) or (1,2)");
    if (s < 1) return c_gamma_norm(g, v, s, opt);
    const CField sp = to_spectrum(g, v);
    std::vector<GridFunction> grad;
    for (int a = 0; a < g.dim; ++a) grad.push_back(spectral_derivative(g, sp, a));
    return c_one_gamma_norm(g, v, grad, s - 1, opt);
}

// ---------------------------------------------------------------------------------------------
// Schauder ratio

struct SchauderReport {
    double u_norm = 0;  // sup_t ||u(t)||_{C_b^{alpha+beta}}
    double g_norm = 0;  // ||g||_{C_b^{alpha+beta}}
    double f_norm = 0;  // sup_t ||f(t)||_{C_b^beta} over the slice times of u
    double ratio = 0;
};

inline SchauderReport schauder_ratio(const SpaceTimeField& u, const Problem& P, const HolderOptions& opt = {}) {
    P.validate();
    const double a = P.model.alpha, b = P.beta, s = a + b;
    require(s > 1 && s < 2, "schauder_ratio: needs 1 < alpha + beta < 2");
    require(u.grid.size() == P.grid.size() && !u.grad.empty(), "schauder_ratio: field and problem grids differ");
    SchauderReport r;
    for (std::size_t k = 0; k < u.u.size(); ++k) {
        r.u_norm = std::max(r.u_norm, c_one_gamma_norm(u.grid, u.u[k], u.grad[k], s - 1, opt));
        r.f_norm = std::max(r.f_norm, c_gamma_norm(u.grid, detail::sample_source(P, u.times[k]), b, opt));
    }
    r.g_norm = c_s_norm(u.grid, detail::sample_terminal(P), s, opt);
    require(r.g_norm + r.f_norm > 0, "schauder_ratio: data norms vanish");
    r.ratio = r.u_norm / (r.g_norm + r.f_norm);
    require(std::isfinite(r.ratio), "schauder_ratio: non-finite ratio");
    return r;
}

// ---------------------------------------------------------------------------------------------
// Hoelder bound for fractional operators

/// Test function of x_1 with its derivative.
struct TestFunction {
    std::string name;
    std::function<double(double)> f, df;
};

/// Ten C_b^s functions of x_1 on the 2 pi torus: trigonometric polynomials, smooth bumps and
/// |sin x|^s smoothed at two scales.
inline std::vector<TestFunction> frac_op_family(double s) {
    auto bump = [](double x) { return std::abs(x) >= 1 ? 0.0 : std::exp(1 - 1 / (1 - x * x)); };
    auto dbump = [bump](double x) { return std::abs(x) >= 1 ? 0.0 : bump(x) * (-2 * x / ((1 - x * x) * (1 - x * x))); };
    std::vector<TestFunction> fam;
    fam.push_back({"cos", [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); }});
    fam.push_back({"sin2/4", [](double x) { return std::sin(2 * x) / 4; }, [](double x) { return std::cos(2 * x) / 2; }});
    fam.push_back({"cos3/9", [](double x) { return std::cos(3 * x) / 9; }, [](double x) { return -std::sin(3 * x) / 3; }});
    fam.push_back({"cos+sin2/2", [](double x) { return std::cos(x) + std::sin(2 * x) / 2; },
                   [](double x) { return -std::sin(x) + std::cos(2 * x); }});
    fam.push_back({"exp_sin", [](double x) { return std::exp(std::sin(x)); },
                   [](double x) { return std::cos(x) * std::exp(std::sin(x)); }});
    fam.push_back({"bump1", bump, dbump});
    fam.push_back({"bump2", [bump](double x) { return bump((x - 0.5) / 2); },
                   [dbump](double x) { return dbump((x - 0.5) / 2) / 2; }});
    for (double e : {0.3, 0.15}) {
        fam.push_back({"smoothed_abs_sin_" + std::to_string(e).substr(0, 4),
                       [s, e](double x) { return std::pow(std::sin(x) * std::sin(x) + e * e, s / 2); },
                       [s, e](double x) {
                           const double q = std::sin(x) * std::sin(x) + e * e;
                           return s * std::pow(q, s / 2 - 1) * std::sin(x) * std::cos(x);
                       }});
    }
    fam.push_back({"sin_bump2", [bump](double x) { return std::sin(x) * bump(x / 2); },
                   [bump, dbump](double x) { return std::cos(x) * bump(x / 2) + std::sin(x) * dbump(x / 2) / 2; }});
    return fam;
}

struct FracOpReport {
    double theta = 0, gamma = 0;
    std::vector<std::string> names;
    std::vector<double> ratios, ratios_fine;  // ||L phi||_{C^gamma} / ||phi||_{C^{gamma+theta}} on N and 2N
    double max_ratio = 0, max_ratio_fine = 0;
    double refinement_delta = 0;  // |max_fine - max| / max
};

namespace detail {

inline double frac_op_ratio(const std::function<GridFunction(const GridFunction&, const GridSpec&)>& L,
                            const TestFunction& tf, double theta, double gamma, const GridSpec& g,
                            const HolderOptions& opt) {
    const auto phi = sample(g, [&](const Point& x) { return tf.f(x[0]); });
    std::vector<GridFunction> grad{sample(g, [&](const Point& x) { return tf.df(x[0]); })};
    if (g.dim == 2) grad.push_back(GridFunction(g.size(), 0.0));
    const double s = gamma + theta;
    const double den = s > 1 ? c_one_gamma_norm(g, phi, grad, s - 1, opt) : c_gamma_norm(g, phi, s, opt);
    const double num = c_gamma_norm(g, L(phi, g), gamma, opt);
    return den > 0 ? num / den : 0.0;
}

inline FracOpReport frac_op_run(const std::function<GridFunction(const GridFunction&, const GridSpec&)>& L,
                                double theta, double gamma, const GridSpec& g, const std::vector<TestFunction>& fam,
                                const HolderOptions& opt) {
    require(theta > 0 && theta <= 1, "frac_op_holder_check: theta must lie in (0,1]");
    require(gamma > 0 && gamma < 1, "frac_op_holder_check: gamma must lie in (0,1)");
    require(theta + gamma > 1, "frac_op_holder_check: needs theta + gamma > 1");
    require(!fam.empty(), "frac_op_holder_check: empty family");
    FracOpReport r;
    r.theta = theta;
    r.gamma = gamma;
    const GridSpec fine(g.dim, g.half_extent, 2 * g.n);
    for (const auto& tf : fam) {
        r.names.push_back(tf.name);
        r.ratios.push_back(frac_op_ratio(L, tf, theta, gamma, g, opt));
        r.ratios_fine.push_back(frac_op_ratio(L, tf, theta, gamma, fine, opt));
        r.max_ratio = std::max(r.max_ratio, r.ratios.back());
        r.max_ratio_fine = std::max(r.max_ratio_fine, r.ratios_fine.back());
    }
    r.refinement_delta = r.max_ratio > 0 ? std::abs(r.max_ratio_fine - r.max_ratio) / r.max_ratio : 0.0;
    return r;
}

}  // namespace detail

/// Max over the family of ||L_theta phi||_{C_b^gamma} / ||phi||_{C_b^{gamma+theta}} on g and on
/// the grid with doubled resolution. L_theta has symbol -|lambda|^theta; theta = 1 is the
/// square root of the Laplacian.
inline FracOpReport frac_op_holder_check(double theta, double gamma, const GridSpec& g,
                                         const std::vector<TestFunction>& fam, const HolderOptions& opt = {}) {
    auto L = [theta](const GridFunction& phi, const GridSpec& gg) {
        return apply_multiplier(gg, phi, [theta](const Point& l) { return cplx(-std::pow(std::hypot(l[0], l[1]), theta), 0); });
    };
    return detail::frac_op_run(L, theta, gamma, g, fam, opt);
}

/// Same check for the generator of a stable model (theta = alpha), applied by levy_apply.
inline FracOpReport frac_op_holder_check(const StableModel& m, double gamma, const GridSpec& g,
                                         const std::vector<TestFunction>& fam, const HolderOptions& opt = {}) {
    require(m.dim == g.dim, "frac_op_holder_check: model and grid dimensions differ");
    auto L = [&m](const GridFunction& phi, const GridSpec& gg) { return levy_apply_spectral(m, phi, gg); };
    return detail::frac_op_run(L, m.alpha, gamma, g, fam, opt);
}

}  // namespace stablab
