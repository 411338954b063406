#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "kernel_engine.hpp"
#include "quadrature.hpp"
#include "spectral_models.hpp"
#include "stats.hpp"
#include "tail_series.hpp"

namespace stablab {

/// The power-law extrapolation beyond the box carries more than a quarter of the moment.
struct TailDominated : NumericalGuard {
    using NumericalGuard::NumericalGuard;
};

struct MomentValue {
    double value = 0;          // grid_part + tail_part
    double grid_part = 0;
    double tail_part = 0;
    double tail_fraction = 0;  // tail_part / grid_part
    double kappa = 0;          // fitted excess decay: |D^k p| ~ |y|^{-d-alpha-kappa}
};

/// |D^k p| on the grid: |p|, Euclidean gradient norm, Frobenius Hessian norm.
inline GridFunction derivative_magnitude(const DensityField& f, int k) {
    require(k >= 0 && k <= 2, "derivative order must be 0, 1 or 2");
    require(k == 0 || (f.dp.size() == static_cast<std::size_t>(f.dim()) && !f.d2p.empty()),
            "field carries no derivative data");
    GridFunction v(f.grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (k == 0) {
            v[i] = std::abs(f.p[i]);
        } else if (f.dim() == 1) {
            v[i] = std::abs(k == 1 ? f.dp[0][i] : f.d2p[0][i]);
        } else if (k == 1) {
            v[i] = std::hypot(f.dp[0][i], f.dp[1][i]);
        } else {
            const double a = f.d2p[0][i], b = f.d2p[1][i], c = f.d2p[2][i];
            v[i] = std::sqrt(a * a + 2 * b * b + c * c);
        }
    }
    return v;
}

/// I = int |y|^gamma |D^k p(t,y)| dy: trapezoid over the box plus the integral beyond it of a
/// power law c |y|^{-E} fitted on the outer shell L/2 <= |y|_inf <= 0.95 L and matched to the
/// boundary values along each ray.
inline MomentValue moment_integral(const DensityField& f, double gamma, int k) {
    require(gamma >= 0 && gamma <= 1, "moment_integral: gamma must lie in [0,1]");
    const GridSpec& g = f.grid;
    const auto v = derivative_magnitude(f, k);
    const double L = g.half_extent, h = g.spacing();
    const int d = g.dim;

    MomentValue out;
    std::vector<double> lr, lv;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point y = g.point(i);
        const double r = norm(y, d);
        out.grid_part += (r > 0 ? std::pow(r, gamma) : (gamma == 0 ? 1.0 : 0.0)) * v[i];
        const double rinf = d == 1 ? std::abs(y[0]) : std::max(std::abs(y[0]), std::abs(y[1]));
        if (rinf >= 0.5 * L && rinf <= 0.95 * L && v[i] > 0) {
            lr.push_back(std::log(r));
            lv.push_back(std::log(v[i]));
        }
    }
    out.grid_part *= g.cell_volume();
    require(lr.size() >= 4, "moment_integral: outer shell has no positive samples");
    const double E = -least_squares(lr, lv).slope;
    out.kappa = E - d - f.alpha;
    const double excess = E - gamma - d;
    if (!(excess > 0))
        throw TailDominated("moment_integral: fitted decay |y|^-" + std::to_string(E) +
                            " leaves a non-integrable moment of order " + std::to_string(gamma));

    // ray from the origin through the boundary point b: int_{|b|}^inf v(b) (r/|b|)^{-E} r^{gamma+d-1} dr
    // equals v(b) |b|^{gamma+d} / excess; in 2d the boundary measure is d phi = L/|b|^2 ds along an edge
    if (d == 1) {
        for (std::size_t i : {std::size_t{0}, g.n - 1}) {
            const double r = std::abs(g.coord(i));
            out.tail_part += v[i] * std::pow(r, gamma + 1) / excess;
        }
    } else {
        const std::size_t N = g.n;
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t edge[4] = {j, (N - 1) * N + j, j * N, j * N + N - 1};
            for (std::size_t idx : edge) {
                const Point b = g.point(idx);
                const double r = norm(b, 2);
                out.tail_part += v[idx] * std::pow(r, gamma + 2) / excess * L / (r * r) * h;
            }
        }
    }
    out.value = out.grid_part + out.tail_part;
    out.tail_fraction = out.tail_part / out.grid_part;
    if (out.tail_fraction > 0.25)
        throw TailDominated("moment_integral: tail correction is " + std::to_string(100 * out.tail_fraction) +
                            "% of the grid integral; no reliable value");
    return out;
}

namespace detail {

// One coordinate factor q(t,.) of a 2-d cylindrical kernel with its derivatives:
// grid interpolation near the origin, far-field series beyond 0.8 L.
class ProductMarginal {
public:
    ProductMarginal(double alpha, double atom, double t) : t_(t), series_(cylindrical(alpha, 1, {atom})) {
        const auto m1 = cylindrical(alpha, 1, {atom});
        field_ = density_fft(m1, t, admissible_grid(m1, t, std::size_t{1} << 14));
        cut_ = 0.8 * field_.grid.half_extent;
    }

    std::array<double, 3> at(double y) const {
        if (std::abs(y) > cut_) {
            const Jet j = series_.jet(t_, {y, 0.0});
            return {j.v, j.g[0], j.H[0]};
        }
        const auto& g = field_.grid;
        const double x0 = g.coord(0), h = g.spacing();
        return {interp_uniform(field_.p, x0, h, y), interp_uniform(field_.dp[0], x0, h, y),
                interp_uniform(field_.d2p[0], x0, h, y)};
    }

private:
    double t_;
    TailSeries series_;
    DensityField field_;
    double cut_ = 0;
};

// Gauss nodes on [0, R]: 8 panels on [0, s], then panels doubling in length.
inline void graded_nodes(double s, double R, std::vector<double>& x, std::vector<double>& w) {
    const Rule& r = gauss_legendre<8>();
    auto panel = [&](double a, double b) {
        for (std::size_t i = 0; i < r.x.size(); ++i) {
            x.push_back(0.5 * (a + b) + 0.5 * (b - a) * r.x[i]);
            w.push_back(0.5 * (b - a) * r.w[i]);
        }
    };
    const double top = std::min(s, R);
    for (int p = 0; p < 8; ++p) panel(top * p / 8, top * (p + 1) / 8);
    for (double a = s; a < R; a *= 2) panel(a, std::min(2 * a, R));
}

}  // namespace detail

/// Moment int_{[-R,R]^2} |y|^gamma |D^k p(t,y)| dy of a 2-d cylindrical kernel, using the
/// product form p = q_1(y_1) q_2(y_2) and graded Gauss quadrature. R = inf stops at 1e12 kernel
/// scales; the neglected part is a fixed fraction of the total under self-similar rescaling.
inline double cylindrical_moment(const StableModel& m, double t, double gamma, int k, double R = INFINITY) {
    require(m.kind == Kind::Cylindrical && m.dim == 2, "cylindrical_moment: needs a 2-d Cylindrical model");
    require(gamma >= 0 && gamma <= 1 && k >= 0 && k <= 2, "cylindrical_moment: gamma in [0,1], k in {0,1,2}");
    require(R > 0, "cylindrical_moment: extent must be positive");
    const detail::ProductMarginal q1(m.alpha, m.atoms[0], t), q2(m.alpha, m.atoms[1], t);
    const double s = std::pow(t * std::max(m.atoms[0], m.atoms[1]), 1 / m.alpha);
    std::vector<double> x, w;
    detail::graded_nodes(s, std::isfinite(R) ? R : 1e12 * s, x, w);
    std::vector<std::array<double, 3>> a(x.size()), b(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        a[i] = q1.at(x[i]);
        b[i] = q2.at(x[i]);
    }
    double sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) {
            const auto& [p1, d1, h1] = a[i];
            const auto& [p2, d2, h2] = b[j];
            double mag;
            if (k == 0)
                mag = std::abs(p1 * p2);
            else if (k == 1)
                mag = std::hypot(d1 * p2, p1 * d2);
            else
                mag = std::sqrt(h1 * p2 * h1 * p2 + 2 * d1 * d2 * d1 * d2 + p1 * h2 * p1 * h2);
            sum += w[i] * w[j] * std::pow(std::hypot(x[i], x[j]), gamma) * mag;
        }
    return 4 * sum;  // four quadrants
}

struct DivergenceReport {
    std::vector<double> extents, integrals, growth;  // growth[i] = I(L_{i+1}) / I(L_i) - 1
    bool divergent = false;
};

/// Truncated moments over growing boxes; divergence is declared when every successive step
/// (a decade of L by default) raises the integral by at least min_growth.
inline DivergenceReport certify_divergence(const StableModel& m, double t, double gamma, int k,
                                           std::vector<double> extents = {1, 10, 100, 1000},
                                           double min_growth = 0.3) {
    require(extents.size() >= 2, "certify_divergence: need at least two extents");
    DivergenceReport r;
    r.extents = extents;
    for (double L : extents) r.integrals.push_back(cylindrical_moment(m, t, gamma, k, L));
    r.divergent = true;
    for (std::size_t i = 1; i < extents.size(); ++i) {
        r.growth.push_back(r.integrals[i] / r.integrals[i - 1] - 1);
        r.divergent = r.divergent && r.growth.back() >= min_growth;
    }
    return r;
}

struct MomentProbe {
    StableModel model;
    int derivative_order = 1;
    double gamma = 0;
    std::vector<double> t_values, integrals, tail_fractions;
    double fitted_slope = 0;
    double theoretical_slope = 0;  // (gamma - k) / alpha
};

enum class Verdict { Pass, Fail, Divergent };

inline const char* verdict_name(Verdict v) {
    return v == Verdict::Pass ? "PASS" : v == Verdict::Fail ? "FAIL" : "DIVERGENT";
}

struct PBetaOptions {
    std::vector<double> t_values = {1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0};
    std::size_t n = 0;  // points per axis; 0 picks 2^16 in 1d and 2^10 in 2d
    double tolerance = 0.05;
};

struct PBetaReport {
    double beta = 0;
    MomentProbe first, second;  // k = 1 and k = 2
    Verdict verdict = Verdict::Fail;
    DivergenceReport divergence;  // filled for Cylindrical with beta >= alpha
};

namespace detail {

// Heat kernel at time t on a grid that follows the kernel scale t^{1/alpha}.
inline DensityField ladder_field(const StableModel& m, double t, std::size_t n) {
    if (m.kind == Kind::Relativistic) {
        // the Nyquist rule of the symbol fixes h; the box follows t^{1/alpha} from its t = 1 size
        const GridSpec g1 = admissible_grid(m, 1.0, n);
        return density_relativistic(m, t, GridSpec(m.dim, g1.half_extent * std::pow(t, 1 / m.alpha), n));
    }
    return density_fft(m, t, admissible_grid(m, t, n));
}

}  // namespace detail

/// Moment probes of orders k = 1, 2 at gamma = beta over the t-ladder, with log-log slopes
/// compared against (beta - k) / alpha.
inline PBetaReport pbeta_report(const StableModel& m, double beta, const PBetaOptions& opt = {}) {
    require(beta > 0 && beta < 1, "pbeta_report: beta must lie in (0,1)");
    require(opt.t_values.size() >= 2, "pbeta_report: need at least two times");
    for (std::size_t i = 1; i < opt.t_values.size(); ++i)
        require(opt.t_values[i] > opt.t_values[i - 1] && opt.t_values[0] > 0, "pbeta_report: times must increase");
    const bool smooth_kind = m.kind == Kind::IsotropicFractional || m.kind == Kind::SmoothSpectralDensity ||
                             m.kind == Kind::Relativistic;
    require(m.kind != Kind::Truncated, "pbeta_report: truncated kernels are not self-similar; no exponent to test");
    require(smooth_kind || m.kind == Kind::Cylindrical, "pbeta_report: unsupported kind");

    PBetaReport rep;
    rep.beta = beta;
    if (m.kind == Kind::Cylindrical && m.dim == 2 && beta >= m.alpha) {
        rep.divergence = certify_divergence(m, 1.0, beta, 1);
        rep.verdict = rep.divergence.divergent ? Verdict::Divergent : Verdict::Fail;
        return rep;
    }
    const std::size_t n = opt.n ? opt.n : (m.dim == 1 ? std::size_t{1} << 16 : std::size_t{1} << 10);
    MomentProbe* probes[2] = {&rep.first, &rep.second};
    for (int k = 1; k <= 2; ++k) {
        auto& pr = *probes[k - 1];
        pr.model = m;
        pr.derivative_order = k;
        pr.gamma = beta;
        pr.t_values = opt.t_values;
        pr.theoretical_slope = (beta - k) / m.alpha;
    }
    for (double t : opt.t_values) {
        if (m.kind == Kind::Cylindrical && m.dim == 2) {
            for (int k = 1; k <= 2; ++k) {
                probes[k - 1]->integrals.push_back(cylindrical_moment(m, t, beta, k));
                probes[k - 1]->tail_fractions.push_back(0.0);
            }
            continue;
        }
        const auto f = detail::ladder_field(m, t, n);
        for (int k = 1; k <= 2; ++k) {
            const auto mv = moment_integral(f, beta, k);
            probes[k - 1]->integrals.push_back(mv.value);
            probes[k - 1]->tail_fractions.push_back(mv.tail_fraction);
        }
    }
    bool ok = true;
    for (auto* pr : probes) {
        pr->fitted_slope = loglog_slope(pr->t_values, pr->integrals);
        require(std::isfinite(pr->fitted_slope), "pbeta_report: non-finite slope");
        ok = ok && std::abs(pr->fitted_slope - pr->theoretical_slope) <= opt.tolerance;
    }
    rep.verdict = ok ? Verdict::Pass : Verdict::Fail;
    return rep;
}

/// Columns t, I_k, tail_fraction.
inline void write_probe_csv(const MomentProbe& pr, const std::string& path) {
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot open " + path);
    os.precision(17);
    os << "t,I_" << pr.derivative_order << ",tail_fraction\n";
    for (std::size_t i = 0; i < pr.t_values.size(); ++i)
        os << pr.t_values[i] << ',' << pr.integrals[i] << ',' << pr.tail_fractions[i] << '\n';
}

struct KolokoltsovReport {
    double t = 0, K = 1;
    double gradient = 0;    // sup |Dp| / (min(t^{-1/alpha}, |y|^{-1}) p)
    double hess_near = 0;   // sup over |y| <= K t^{1/alpha} of |D^2 p| / (t^{-2/alpha} p)
    double hess_far = 0;    // sup over |y| >  K t^{1/alpha} of |D^2 p| / (t^{-1} |y|^{alpha-2} p)
    std::size_t excluded = 0;  // points with p < 1e-14 max p
};

/// Empirical constants of the pointwise bounds on Dp and D^2p relative to p.
inline KolokoltsovReport kolokoltsov_check(const DensityField& f, double K) {
    require(f.kind == Kind::IsotropicFractional || f.kind == Kind::SmoothSpectralDensity,
            "kolokoltsov_check: needs an isotropic or smooth-density kernel");
    require(K > 0, "kolokoltsov_check: K must be positive");
    const auto g1 = derivative_magnitude(f, 1), g2 = derivative_magnitude(f, 2);
    const double t = f.t, a = f.alpha, s = std::pow(t, 1 / a);
    const double floor = 1e-14 * sup_norm(f.p);
    KolokoltsovReport r;
    r.t = t;
    r.K = K;
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
        const double p = f.p[i];
        if (p < floor) {
            ++r.excluded;
            continue;
        }
        const double y = norm(f.grid.point(i), f.dim());
        const double w = y > 0 ? std::min(1 / s, 1 / y) : 1 / s;
        r.gradient = std::max(r.gradient, g1[i] / (w * p));
        if (y <= K * s)
            r.hess_near = std::max(r.hess_near, g2[i] * s * s / p);
        else
            r.hess_far = std::max(r.hess_far, g2[i] * t / (std::pow(y, a - 2) * p));
    }
    return r;
}

struct KolokoltsovStability {
    std::vector<KolokoltsovReport> coarse, fine;  // per t, on h and h/2
    bool common_grid = true;  // false: each t used its own admissible grid
    double across_t = 0;      // largest relative spread of an envelope over t (coarse grid)
    double refinement = 0;    // largest relative change of an envelope under h -> h/2
};

/// Envelopes for each t and under refinement h -> h/2 at fixed box.
/// One grid serves all t when the grid admissible at the smallest t still holds
/// 3 kernel scales of the largest t; otherwise each t gets its own admissible grid.
inline KolokoltsovStability kolokoltsov_stability(const StableModel& m, double K, const std::vector<double>& ts,
                                                  std::size_t n) {
    require(!ts.empty(), "kolokoltsov_stability: need times");
    const auto [tmin, tmax] = std::minmax_element(ts.begin(), ts.end());
    const KernelOptions opt;
    const GridSpec common = admissible_grid(m, *tmin, n);
    KolokoltsovStability st;
    st.common_grid = common.half_extent >= opt.min_scale_units * detail::kernel_scale(m, *tmax);
    auto env = [](const KolokoltsovReport& r) { return std::array<double, 3>{r.gradient, r.hess_near, r.hess_far}; };
    for (double t : ts) {
        const GridSpec g = st.common_grid ? common : admissible_grid(m, t, n);
        st.coarse.push_back(kolokoltsov_check(density_fft(m, t, g), K));
        st.fine.push_back(kolokoltsov_check(density_fft(m, t, GridSpec(g.dim, g.half_extent, 2 * n)), K));
        const auto c = env(st.coarse.back()), fn = env(st.fine.back());
        for (int e = 0; e < 3; ++e) st.refinement = std::max(st.refinement, std::abs(fn[e] - c[e]) / c[e]);
    }
    for (int e = 0; e < 3; ++e) {
        double lo = INFINITY, hi = 0;
        for (const auto& r : st.coarse) {
            lo = std::min(lo, env(r)[e]);
            hi = std::max(hi, env(r)[e]);
        }
        st.across_t = std::max(st.across_t, (hi - lo) / lo);
    }
    return st;
}

}  // namespace stablab
