// One PASS/FAIL line per acceptance criterion; exit status 1 when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "stablab/flow_engine.hpp"
#include "stablab/holder_metrics.hpp"
#include "stablab/integrability.hpp"
#include "stablab/kernel_engine.hpp"
#include "stablab/proxy_solver.hpp"
#include "stablab/sampling.hpp"
#include "stablab/stats.hpp"

using namespace stablab;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

std::string fmt(const char* f, auto... v) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, v...);
    return buf;
}

DensityField kernel(const StableModel& m, double t) {
    return density_fft(m, t, admissible_grid(m, t, m.dim == 1 ? 4096 : 1024));
}

Outcome normalization() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    for (int dim : {1, 2})
        for (double al : {0.6, 0.8})
            for (double t : {0.25, 1.0})
                for (const auto& m : {isotropic(al, dim), cylindrical(al, dim), smooth_density(al, dim, trig_density(0.5))})
                    worst = std::max(worst, std::abs(kernel(m, t).total_mass() - 1));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-3 && secs <= 30, fmt("max |mass - 1| = %.2e over 24 cases (tol 1e-3), %.1f s (limit 30 s)", worst, secs)};
}

Outcome self_similarity() {
    double worst = 0;
    for (const auto& m : {isotropic(0.6, 1), isotropic(0.8, 2), smooth_density(0.7, 2, trig_density(0.5))}) {
        const std::size_t N = m.dim == 1 ? 4096 : 512;
        const auto d1 = density_fft(m, 1, admissible_grid(m, 1, N));
        for (double t : {0.25, 0.5}) {
            const auto g = admissible_grid(m, t, N);
            const auto dt = density_fft(m, t, g);
            const double s = std::pow(t, 1 / m.alpha);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (norm(g.point(i), m.dim) > 5 * s) continue;
                const double ref = d1.p[i] / std::pow(s, m.dim);
                worst = std::max(worst, std::abs(dt.p[i] - ref) / ref);
            }
        }
    }
    return {worst <= 1e-3, fmt("max relative error %.2e on |y| <= 5 t^{1/alpha} (tol 1e-3)", worst)};
}

Outcome anchor() {
    const auto d = density_fft(isotropic(0.5, 1), 1, GridSpec(1, 200, 1 << 16));
    const double rel = std::abs(d.p[1 << 15] / (2 / M_PI) - 1);
    return {rel <= 1e-3, fmt("p(1,0) = %.8f vs 2/pi, relative error %.2e (tol 1e-3)", d.p[1 << 15], rel)};
}

Outcome pbeta_exponents() {
    bool ok = true;
    double worst = 0;
    for (const auto& [a, b] : std::vector<std::pair<double, double>>{{0.6, 0.8}, {0.7, 0.5}, {0.8, 0.3}}) {
        const auto r = pbeta_report(isotropic(a, 1), b);
        ok = ok && r.verdict == Verdict::Pass;
        worst = std::max({worst, std::abs(r.first.fitted_slope - r.first.theoretical_slope),
                          std::abs(r.second.fitted_slope - r.second.theoretical_slope)});
    }
    const auto below = pbeta_report(cylindrical(0.7, 2), 0.5);
    const auto at = pbeta_report(cylindrical(0.6, 2), 0.6);
    double growth = INFINITY;
    for (double g : at.divergence.growth) growth = std::min(growth, g);
    ok = ok && below.verdict == Verdict::Pass && at.verdict == Verdict::Divergent && at.divergence.growth.size() == 3 &&
         growth >= 0.3;
    return {ok, fmt("isotropic max slope error %.3f (tol 0.05); cylindrical beta<alpha %s; beta=alpha %s, min growth "
                    "per decade %.2f over %zu decades",
                    worst, verdict_name(below.verdict), verdict_name(at.verdict), growth, at.divergence.growth.size())};
}

Outcome relativistic_bound() {
    const auto g = GridSpec(1, 30, 1 << 15);
    double excess = -INFINITY;
    for (double t : {0.05, 0.1, 0.25, 0.5, 1.0}) {
        const auto pm = density_relativistic(relativistic(0.7, 1, 1.0), t, g);
        const auto p0 = density_relativistic(relativistic(0.7, 1, 0.0), t, g);
        for (std::size_t i = 0; i < g.size(); ++i) excess = std::max(excess, pm.p[i] - std::exp(1.0) * p0.p[i]);
    }
    const auto r = pbeta_report(relativistic(0.7, 1, 1.0), 0.9);
    const bool ok = excess <= 1e-4 && r.verdict == Verdict::Pass;
    return {ok, fmt("max(p_m - e^m p_0) = %.2e (tol 1e-4); slopes k=1 %.3f vs %.3f, k=2 %.3f vs %.3f (tol 0.05) on t in "
                    "2^-6..1",
                    excess, r.first.fitted_slope, r.first.theoretical_slope, r.second.fitted_slope,
                    r.second.theoretical_slope)};
}

Outcome kolokoltsov() {
    const auto s1 = kolokoltsov_stability(isotropic(0.7, 1), 1.0, {0.25, 0.5, 1.0}, 1 << 14);
    const auto s2 = kolokoltsov_stability(isotropic(0.7, 2), 1.0, {0.25, 0.5, 1.0}, 512);
    bool finite = true;
    for (const auto* s : {&s1, &s2})
        for (const auto& r : s->coarse) finite = finite && std::isfinite(r.gradient) && std::isfinite(r.hess_near) && std::isfinite(r.hess_far);
    const double across = std::max(s1.across_t, s2.across_t), refine = std::max(s1.refinement, s2.refinement);
    return {finite && across <= 0.2 && refine <= 0.05,
            fmt("spread across t %.3f (tol 0.2), grid halving %.2e (tol 0.05), d = 1, 2", across, refine)};
}

Outcome flow_lemma() {
    const auto F = holder_bump(1, 0.6);
    const auto rep = flow_stability_check(F, 0.6, random_flow_pairs(500, 1, 42));
    double worst = 0;  // max of |F_delta - F| / (K0 delta^beta) on sampled points
    for (double delta : {0.1, 0.03, 0.01}) {
        const auto G = mollify(F, delta);
        for (int i = 0; i <= 4000; ++i) {
            const Point x{-3 + 6.0 * i / 4000, 0};
            worst = std::max(worst, std::abs(G(0, x)[0] - F(0, x)[0]) / (F.K0 * std::pow(delta, F.beta)));
        }
    }
    const bool ok = std::isfinite(rep.max_ratio) && rep.relative_change <= 0.1 && worst <= 1 + 1e-12;
    return {ok, fmt("max ratio %.4f, change under step halving %.2e (tol 0.1); max |F_d - F| / (K0 d^beta) = %.4f (<= 1)",
                    rep.max_ratio, rep.relative_change, worst)};
}

Outcome frozen_smoothing() {
    const GridSpec g(1, M_PI, std::size_t{1} << 18);
    const auto phi = sample(g, [](const Point& x) { return std::sqrt(std::abs(std::sin(x[0]))); });
    std::vector<double> lags;
    for (int j = 8; j >= 2; --j) lags.push_back(std::ldexp(1.0, -j));
    const auto r = smoothing_probe(isotropic(0.7, 1), holder_bump(1, 0.5), {0, {0.2, 0}}, 0.5, lags, phi, g);
    return {r.verdict == Verdict::Pass, fmt("slopes %.4f vs %.4f (tol 0.05), %.4f vs %.4f (tol 0.07)", r.slope1, r.theory1,
                                            r.slope2, r.theory2)};
}

Outcome solver_consistency() {
    const auto t0 = std::chrono::steady_clock::now();
    const Problem P = reference_problem(512);
    const FreezingPair pair{0, {0.2, 0}};
    ResidualOptions ro;
    ro.frozen = pair;
    const double frozen = residual_check(duhamel_proxy(P, pair), P, ro).sup;
    const auto full = solve_full(P);
    const auto lad = viscosity_extrapolation(P);
    const double gap = sup_gap(full.u, lad.extrapolations.back());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {frozen <= 5e-3 && gap <= 1e-2 && secs <= 300,
            fmt("frozen residual %.2e (tol 5e-3); full vs extrapolated viscosity gap %.2e (tol 1e-2); %.1f s (limit 300 s)",
                frozen, gap, secs)};
}

Outcome schauder_robustness() {
    const ViscosityOptions vo{16, 1e-3};
    std::vector<double> r;
    for (double c : {0.0, 10.0, 100.0}) {
        Problem P = reference_problem(256);
        P.drift = shifted_sin(c, 1.0, 0.5);
        r.push_back(schauder_ratio(solve_viscosity(P, 0, vo), P).ratio);
    }
    Problem ou = reference_problem(256);
    ou.drift = linear_drift({-1.0});
    const double rou = schauder_ratio(solve_viscosity(ou, 0, vo), ou).ratio;
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    const double var = *hi / *lo - 1;
    return {var <= 0.2 && std::isfinite(rou) && rou > 0,
            fmt("ratios %.4f / %.4f / %.4f for c = 0/10/100, variation %.3f (tol 0.2); OU ratio %.4f", r[0], r[1], r[2], var, rou)};
}

Outcome fracop_bound() {
    const GridSpec g(1, M_PI, 512);
    bool ok = true;
    std::string d;
    for (const auto& [th, ga] : std::vector<std::pair<double, double>>{{0.7, 0.5}, {1.0, 0.3}}) {
        const auto r = frac_op_holder_check(th, ga, g, frac_op_family(th + ga));
        ok = ok && r.ratios.size() == 10 && std::isfinite(r.max_ratio) && r.refinement_delta <= 0.15;
        d += fmt("(theta %.1f, gamma %.1f) max %.4f, halving drift %.2e; ", th, ga, r.max_ratio, r.refinement_delta);
    }
    return {ok, d + "tol 0.15"};
}

Outcome monte_carlo() {
    const auto m = isotropic(0.7, 1);
    const auto s = sample_stable(m, 1, 1000000, 11);
    std::vector<double> xs;
    for (const auto& p : s.points) xs.push_back(p[0]);
    const double l1 = histogram_l1_distance(xs, kernel(m, 1), -10, 10, 0.1);
    const double t = 0.3, sc = std::pow(t, 1 / m.alpha);
    const auto a = sample_stable(m, t, 100000, 1), b = sample_stable(m, 1, 100000, 2);
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        xa.push_back(a.points[i][0]);
        xb.push_back(sc * b.points[i][0]);
    }
    const double ks = ks_two_sample(xa, xb), crit = ks_critical(xa.size(), xb.size(), 0.01);
    return {l1 <= 0.02 && ks < crit, fmt("histogram L1 %.4f (tol 0.02); scaling KS %.4f vs critical %.4f at 1%%", l1, ks, crit)};
}

}  // namespace

int main() {
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"kernel normalization", normalization},
        {"self-similarity", self_similarity},
        {"closed-form anchor p(1,0) = 2/pi", anchor},
        {"moment exponents and cylindrical divergence", pbeta_exponents},
        {"relativistic bound and moment exponents", relativistic_bound},
        {"pointwise derivative envelopes", kolokoltsov},
        {"flow stability and mollification error", flow_lemma},
        {"frozen-semigroup smoothing exponents", frozen_smoothing},
        {"solver consistency on the reference scenario", solver_consistency},
        {"Schauder ratio across drift offsets", schauder_robustness},
        {"fractional-operator Hoelder bound", fracop_bound},
        {"Monte-Carlo cross-check", monte_carlo},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.ok;
        std::printf("%s  criterion %2zu  %s: %s\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    }
    std::printf("%zu/%zu criteria pass\n", criteria.size() - failed, criteria.size());
    return failed ? 1 : 0;
}
