#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "stablab/proxy_solver.hpp"

using namespace stablab;

namespace {

Problem constant_data(double c) {
    Problem P;
    P.drift = holder_bump(1.0, 0.5);
    P.g = [c](const Point&) { return c; };
    P.grid = GridSpec(1, M_PI, 128);
    return P;
}

double max_abs_diff(const GridFunction& a, const GridFunction& b) {
    double w = 0;
    for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
    return w;
}

// cheap variant of the reference scenario for unit tests
Problem small_reference() { return reference_problem(128); }

}  // namespace

TEST(Cutoff, ProfileShape) {
    EXPECT_EQ(CutoffSpec::profile(0.0), 1.0);
    EXPECT_EQ(CutoffSpec::profile(0.5), 1.0);
    EXPECT_EQ(CutoffSpec::profile(1.0), 0.0);
    EXPECT_EQ(CutoffSpec::profile(1.7), 0.0);
    double d2 = 0;
    const double h = 1e-3;
    for (int i = 1; i < 1200; ++i) {
        const double r = i * 1e-3;
        const double v = CutoffSpec::profile(r);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        d2 = std::max(d2, std::abs(CutoffSpec::profile(r + h) - 2 * v + CutoffSpec::profile(r - h)) / (h * h));
    }
    EXPECT_LT(d2, 100.0);  // bounded second difference: no kink at r = 1/2 or r = 1
}

TEST(FrozenSemigroup, MassAndFourierEigenfunction) {
    const auto m = isotropic(0.7, 1);
    const GridSpec g(1, M_PI, 256);
    const GridFunction one(g.size(), 1.0);
    const auto c = sample(g, [](const Point& x) { return std::cos(x[0]); });
    for (auto path : {SemigroupPath::Spectral, SemigroupPath::Quadrature}) {
        const auto u = frozen_semigroup_apply(m, holder_bump(1, 0.5), {0, {0.3, 0}}, 0.1, 0.3, one, g, path);
        for (double v : u) EXPECT_NEAR(v, 1.0, 1e-3);
        const auto w = frozen_semigroup_apply(m, zero_drift(1), {0, {0, 0}}, 0.1, 0.3, c, g, path);
        for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(w[i], std::exp(0.2 * symbol(m, {1, 0})) * c[i], 1e-3);
    }
}

TEST(FrozenSemigroup, ShiftAlongFrozenFlowAndPathsAgree) {
    const auto m = isotropic(0.6, 1);
    const GridSpec g(1, M_PI, 256);
    const auto c = sample(g, [](const Point& x) { return std::cos(x[0]); });
    // constant drift: m_{s,t}(x) = x + b (s - t)
    const auto u = frozen_semigroup_apply(m, constant_drift({0.8}), {0, {0, 0}}, 0.1, 0.6, c, g);
    for (std::size_t i = 0; i < g.size(); ++i)
        EXPECT_NEAR(u[i], std::exp(-0.5) * std::cos(g.coord(i) + 0.8 * 0.5), 1e-10);
    // Hoelder drift: both paths see the same shift
    const auto phi = sample(g, [](const Point& x) { return std::exp(std::sin(x[0])) + 0.3 * std::cos(3 * x[0]); });
    const auto a = frozen_semigroup_apply(m, holder_bump(1, 0.5), {0, {-0.2, 0}}, 0.05, 0.3, phi, g);
    const auto b = frozen_semigroup_apply(m, holder_bump(1, 0.5), {0, {-0.2, 0}}, 0.05, 0.3, phi, g,
                                          SemigroupPath::Quadrature);
    EXPECT_LT(max_abs_diff(a, b), 1e-4);
}

TEST(FrozenSemigroup, Guards) {
    const auto m = isotropic(0.7, 1);
    const GridSpec g(1, M_PI, 128);
    const GridFunction one(g.size(), 1.0);
    EXPECT_THROW(frozen_semigroup_apply(m, zero_drift(1), {}, 0.3, 0.3, one, g), ValidationError);
    EXPECT_THROW(frozen_semigroup_apply(m, zero_drift(1), {0.5, {0, 0}}, 0.3, 0.4, one, g), ValidationError);
    // the sampled kernel cannot resolve a lag this small
    EXPECT_THROW(frozen_semigroup_apply(m, zero_drift(1), {}, 0.3, 0.3 + 1e-7, one, g, SemigroupPath::Quadrature),
                 NumericalGuard);
}

TEST(SmoothingProbe, HoelderCuspExponents) {
    const GridSpec g(1, M_PI, std::size_t{1} << 18);
    const auto phi = sample(g, [](const Point& x) { return std::sqrt(std::abs(std::sin(x[0]))); });
    std::vector<double> lags;
    for (int j = 8; j >= 2; --j) lags.push_back(std::ldexp(1.0, -j));
    const auto r = smoothing_probe(isotropic(0.7, 1), holder_bump(1, 0.5), {0, {0.2, 0}}, 0.5, lags, phi, g);
    EXPECT_EQ(r.verdict, Verdict::Pass);
    EXPECT_NEAR(r.slope1, -0.5 / 0.7, 0.05);
    EXPECT_NEAR(r.slope2, -1.5 / 0.7, 0.07);
}

TEST(SmoothingProbe, ConstantsAndCylindricalRefusal) {
    const GridSpec g(1, M_PI, 256);
    const auto r = smoothing_probe(isotropic(0.7, 1), zero_drift(1), {}, 0.5, {0.01, 0.1}, GridFunction(256, 2.0), g);
    for (double v : r.sup_d1) EXPECT_LT(v, 1e-12);
    EXPECT_TRUE(std::isnan(r.slope1));
    EXPECT_EQ(r.verdict, Verdict::Fail);
    const GridSpec g2(2, M_PI, 64);
    const auto c = smoothing_probe(cylindrical(0.6, 2), zero_drift(2), {}, 0.6, {0.01, 0.1}, GridFunction(g2.size(), 1.0), g2);
    EXPECT_EQ(c.verdict, Verdict::Divergent);
    EXPECT_TRUE(c.sup_d1.empty());
}

TEST(Duhamel, ConstantsAndUnitSource) {
    auto P = constant_data(1.5);
    const auto u = duhamel_proxy(P, {0, {0, 0}});
    for (const auto& s : u.u)
        for (double v : s) EXPECT_NEAR(v, 1.5, 1e-12);
    P.g = [](const Point&) { return 0.0; };
    P.f = [](double, const Point&) { return 1.0; };
    const auto w = duhamel_proxy(P, {0.1, {0.5, 0}});
    for (std::size_t k = 0; k < w.times.size(); ++k)
        for (double v : w.u[k]) EXPECT_NEAR(v, P.T - w.times[k], 1e-3);
}

TEST(Duhamel, ConstantDriftMatchesSpectralClosedForm) {
    Problem P;
    P.drift = constant_drift({0.7});
    P.g = [](const Point& x) { return std::cos(x[0]) + 0.5 * std::sin(2 * x[0]); };
    P.grid = GridSpec(1, M_PI, 128);
    const auto u = duhamel_proxy(P, {0, {0, 0}});
    const double p1 = symbol(P.model, {1, 0}), p2 = symbol(P.model, {2, 0});
    for (std::size_t k = 0; k < u.times.size(); ++k) {
        const double r = P.T - u.times[k];
        for (std::size_t i = 0; i < P.grid.size(); ++i) {
            const double y = P.grid.coord(i) + 0.7 * r;
            EXPECT_NEAR(u.u[k][i], std::exp(r * p1) * std::cos(y) + 0.5 * std::exp(r * p2) * std::sin(2 * y), 1e-3);
        }
    }
}

TEST(Duhamel, FrozenResidualBoundsAndGrading) {
    const auto P = small_reference();
    const FreezingPair pair{0, {0.3, 0}};
    const auto u = duhamel_proxy(P, pair);
    ResidualOptions ro;
    ro.frozen = pair;
    EXPECT_LE(residual_check(u, P, ro).sup, 5e-3);
    // sup bound ||g|| + T ||f||
    for (double s : u.sup) EXPECT_LE(s, 1.0 + P.T + 1e-6);
    // with f, g >= 0 the solution stays nonnegative
    Problem Q = P;
    Q.f = [](double, const Point& x) { return 1 + std::cos(x[0]); };
    for (const auto& s : duhamel_proxy(Q, pair).u)
        for (double v : s) EXPECT_GE(v, -1e-9);
    TimeMesh coarse;
    coarse.grading = 1.0;  // uniform in s: does not refine near s = t
    EXPECT_THROW(duhamel_proxy(P, pair, coarse), ValidationError);
    Problem bad = P;
    bad.beta = 0.2;
    EXPECT_THROW(duhamel_proxy(bad, pair), ValidationError);
}

TEST(Remainder, OraclesOfTheDefinition) {
    const auto P = small_reference();
    const FreezingPair pair{0, {-0.4, 0}};
    const auto u = duhamel_proxy(P, pair);
    const double t = u.times[8];

    // constant drift: no remainder R
    Problem C = P;
    C.drift = constant_drift({2.0});
    const auto rc = remainder_eval(C, pair, u, {}, t);
    for (double v : rc.R) EXPECT_EQ(v, 0.0);

    // constant u: S = -u L eta and no carre du champ
    SpaceTimeField one = u;
    for (auto& s : one.u) std::fill(s.begin(), s.end(), 2.0);
    one.finalize();
    const auto r1 = remainder_eval(P, pair, one, {}, t);
    const auto Leta = levy_apply_spectral(P.model, r1.eta, P.grid);
    for (std::size_t i = 0; i < P.grid.size(); ++i) {
        EXPECT_NEAR(r1.carre_du_champ[i], 0, 1e-10);
        EXPECT_NEAR(r1.S[i], -2.0 * Leta[i], 1e-10);
    }

    // degenerate cutoff: S vanishes
    CutoffSpec global;
    global.global = true;
    for (double v : remainder_eval(P, pair, u, global, t).S) EXPECT_NEAR(v, 0, 1e-10);

    // eta = 1 near the frozen flow, R matches its definition there
    const auto r = remainder_eval(P, pair, u, {}, t);
    const Point c = integrate_flow(P.drift, 0, pair.xi, t, 1e-3, false).end();
    const std::size_t k = u.slice_index(t);
    for (std::size_t i = 0; i < P.grid.size(); ++i) {
        const double x = P.grid.coord(i);
        if (std::abs(x - c[0]) > 0.5) continue;
        EXPECT_EQ(r.eta[i], 1.0);
        EXPECT_NEAR(r.R[i], (P.drift(t, {x, 0})[0] - P.drift(t, c)[0]) * u.grad[k][0][i], 1e-12);
    }
}

TEST(Remainder, QuadraturePathAndGuard) {
    Problem P = small_reference();
    P.grid = GridSpec(1, M_PI, 512);  // the quadrature converges like h^2 here; 256 points leave 0.3%
    const FreezingPair pair{0, {0, 0}};
    const auto u = duhamel_proxy(P, pair);
    CutoffSpec cut;
    cut.radius = 1.2;
    const auto a = remainder_eval(P, pair, u, cut, u.times[4]);
    const auto b = remainder_eval(P, pair, u, cut, u.times[4], true);
    EXPECT_LT(max_abs_diff(a.carre_du_champ, b.carre_du_champ), 1e-3 * sup_norm(a.carre_du_champ));
    cut.radius = 1.6;  // |c| + 2 radii > pi
    EXPECT_THROW(remainder_eval(P, pair, u, cut, u.times[4]), NumericalGuard);
}

TEST(SolveFull, DriftlessAndConstantDriftOracles) {
    FullOptions opt;
    opt.slices = 16;
    opt.tol = 1e-8;
    Problem P = small_reference();
    P.drift = zero_drift(1);
    const auto full = solve_full(P, opt);
    TimeMesh mesh;
    mesh.slices = 16;
    const auto proxy = duhamel_proxy(P, {0, {0, 0}}, mesh);
    EXPECT_LE(sup_gap(full.u, proxy), opt.tol);
    EXPECT_EQ(full.subintervals, 1u);

    P.drift = constant_drift({0.9});
    P.g = [](const Point& x) { return std::cos(x[0]); };
    P.f = [](double, const Point&) { return 0.0; };
    const auto c = solve_full(P, opt);
    const double p1 = symbol(P.model, {1, 0});
    double w = 0;
    for (std::size_t k = 0; k < c.u.times.size(); ++k) {
        const double r = P.T - c.u.times[k];
        for (std::size_t i = 0; i < P.grid.size(); ++i)
            w = std::max(w, std::abs(c.u.u[k][i] - std::exp(r * p1) * std::cos(P.grid.coord(i) + 0.9 * r)));
    }
    // interpolation at the off-grid flow end points is cubic
    EXPECT_LE(w, 1e-5);
}

TEST(SolveFull, AgreesWithViscosityReference) {
    const auto P = small_reference();
    FullOptions opt;
    opt.slices = 16;
    opt.nodes = 32;
    opt.h_flow = 5e-3;
    const auto full = solve_full(P, opt);
    EXPECT_GE(full.iterations.front(), 2u);
    for (double c : full.contraction.front()) EXPECT_LE(c, 0.5);
    ViscosityOptions vo;
    vo.slices = 16;
    vo.time_step = 2.5e-3;
    const auto lad = viscosity_extrapolation(P, {0.04, 0.02, 0.01}, vo);
    EXPECT_LE(lad.last_change, 1e-2);
    EXPECT_LE(sup_gap(full.u, lad.extrapolations.back()), 1e-2);
    EXPECT_LE(residual_check(full.u, P).sup, 5e-3);
}

TEST(SolveFull, NonConvergenceReportsHistory) {
    FullOptions opt;
    opt.slices = 4;
    opt.max_iter = 1;
    opt.tol = 1e-14;
    try {
        solve_full(small_reference(), opt);
        FAIL() << "expected a numerical guard";
    } catch (const NumericalGuard& e) {
        EXPECT_NE(std::string(e.what()).find("contraction history"), std::string::npos);
    }
}

TEST(SolveViscosity, DriftlessPropagationAndConstants) {
    Problem P;
    P.grid = GridSpec(1, M_PI, 128);
    P.g = [](const Point& x) { return std::cos(2 * x[0]); };
    ViscosityOptions vo;
    vo.slices = 8;
    const auto u = solve_viscosity(P, 0.03, vo);
    const double p2 = symbol(P.model, {2, 0}) - 0.03 * 2;
    for (std::size_t k = 0; k < u.times.size(); ++k)
        for (std::size_t i = 0; i < P.grid.size(); ++i)
            EXPECT_NEAR(u.u[k][i], std::exp((P.T - u.times[k]) * p2) * std::cos(2 * P.grid.coord(i)), 1e-12);

    const auto c = solve_viscosity(constant_data(0.7), 0.02, vo);
    for (const auto& s : c.u)
        for (double v : s) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(SolveViscosity, ResidualCflAndPositivity) {
    auto P = small_reference();
    ViscosityOptions vo;
    vo.slices = 16;
    vo.time_step = 2.5e-3;
    const auto u = solve_viscosity(P, 0.02, vo);
    ResidualOptions ro;
    ro.eps = 0.02;
    EXPECT_LE(residual_check(u, P, ro).sup, 5e-3);

    Problem Q = P;
    Q.f = [](double, const Point& x) { return 1 + std::cos(x[0]); };
    for (const auto& s : solve_viscosity(Q, 0.02, vo).u)
        for (double v : s) EXPECT_GE(v, -1e-6);

    Problem fast = P;
    fast.drift = shifted_sin(1000, 1);
    vo.time_step = 0.01;
    EXPECT_THROW(solve_viscosity(fast, 0.01, vo), NumericalGuard);
}

TEST(Residual, ConstantFieldHasNoResidual) {
    auto P = constant_data(3.0);
    P.drift = shifted_sin(2, 1);
    const auto u = solve_viscosity(P, 0.01, {8, 5e-3});
    ResidualOptions ro;
    ro.eps = 0.01;
    const auto r = residual_check(u, P, ro);
    EXPECT_LT(r.sup, 1e-12);
    EXPECT_GT(r.samples, 0u);
}

TEST(SpaceTime, BinaryRoundTrip) {
    const auto u = duhamel_proxy(small_reference(), {0, {0, 0}});
    const std::string path = testing::TempDir() + "u.sips";
    write_space_time(u, path);
    const auto r = read_space_time(path);
    EXPECT_EQ(r.times, u.times);
    EXPECT_EQ(r.u, u.u);
    EXPECT_EQ(r.grad[3], u.grad[3]);
}
