#include <gtest/gtest.h>

#include <cmath>

#include "stablab/holder_metrics.hpp"

using namespace stablab;

namespace {

const GridSpec G1(1, M_PI, 512);

Problem schauder_problem(const DriftField& F, std::size_t n = 256) {
    Problem P = reference_problem(n);
    P.drift = F;
    return P;
}

}  // namespace

TEST(HolderSeminorm, PowerConstantAndSine) {
    for (double gam : {0.3, 0.5, 0.8}) {
        const auto v = sample(G1, [gam](const Point& x) { return std::pow(std::abs(x[0]), gam); });
        const auto r = holder_seminorm(G1, v, gam);
        EXPECT_NEAR(r.seminorm, 1.0, 0.02) << gam;
        EXPECT_LE(r.max_pair_separation, 1.0 + 1e-12);
        EXPECT_GT(r.pair_count, 0u);
    }
    EXPECT_EQ(holder_seminorm(G1, GridFunction(G1.size(), 3.0), 0.5).seminorm, 0.0);
    const auto s = sample(G1, [](const Point& x) { return std::sin(x[0]); });
    EXPECT_NEAR(holder_seminorm(G1, s, 1.0).seminorm, 1.0, 0.02);
    EXPECT_NEAR(holder_seminorm(G1, s, 1.0).sup_norm, 1.0, 1e-4);
}

TEST(HolderSeminorm, ScalingTriangleAndInterpolation) {
    const auto a = sample(G1, [](const Point& x) { return std::pow(std::abs(std::sin(x[0])), 0.6); });
    const auto b = sample(G1, [](const Point& x) { return std::cos(2 * x[0]) + 0.3 * std::abs(x[0] - 0.4); });
    GridFunction sum(a.size()), scaled(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum[i] = a[i] + b[i];
        scaled[i] = -2.5 * a[i];
    }
    for (double gam : {0.4, 0.6}) {
        const double sa = holder_seminorm(G1, a, gam).seminorm, sb = holder_seminorm(G1, b, gam).seminorm;
        EXPECT_LE(holder_seminorm(G1, sum, gam).seminorm, sa + sb + 1e-12);
        EXPECT_NEAR(holder_seminorm(G1, scaled, gam).seminorm, 2.5 * sa, 1e-12);
    }
    // [psi]_gamma <= 2 ||psi||^{1-gamma} [psi]_1^gamma on pairs of separation <= 1
    const double g = 0.4;
    const auto rb = holder_seminorm(G1, b, g), r1 = holder_seminorm(G1, b, 1.0);
    EXPECT_LE(rb.seminorm, 2 * std::pow(rb.sup_norm, 1 - g) * std::pow(r1.seminorm, g));
}

TEST(HolderSeminorm, TwoDimensionalVectorAndGuards) {
    const GridSpec g2(2, M_PI, 64);
    const auto r = sample(g2, [](const Point& x) { return std::pow(std::hypot(x[0], x[1]), 0.5); });
    EXPECT_NEAR(holder_seminorm(g2, r, 0.5).seminorm, 1.0, 0.02);
    const auto c = sample(g2, [](const Point& x) { return x[0]; });
    const auto d = sample(g2, [](const Point& x) { return x[1]; });
    EXPECT_NEAR(holder_seminorm(g2, {c, d}, 1.0).seminorm, 1.0, 1e-12);  // identity map is an isometry
    EXPECT_THROW(holder_seminorm(G1, r, 0.5), ValidationError);
    EXPECT_THROW(holder_seminorm(G1, GridFunction(G1.size()), 0.0), ValidationError);
    EXPECT_THROW(holder_seminorm(G1, GridFunction(G1.size()), 1.2), ValidationError);
    EXPECT_THROW(holder_seminorm(GridSpec(1, 64, 64), GridFunction(64), 0.5), ValidationError);
    HolderOptions glob;
    glob.global = true;
    const auto lin = sample(G1, [](const Point& x) { return x[0]; });
    const auto gr = holder_seminorm(G1, lin, 0.5, glob);
    EXPECT_GT(gr.max_pair_separation, 1.0);
    EXPECT_GT(gr.seminorm, holder_seminorm(G1, lin, 0.5).seminorm);
}

TEST(Schauder, ConstantsGiveRatioOne) {
    Problem P = reference_problem(128);
    P.drift = zero_drift(1);
    P.f = [](double, const Point&) { return 0.0; };
    P.g = [](const Point&) { return 2.0; };
    const auto u = solve_viscosity(P, 0, {16, 2e-3});
    const auto r = schauder_ratio(u, P);
    EXPECT_NEAR(r.ratio, 1.0, 1e-9);
}

TEST(Schauder, HeatFlowStableUnderTimeRefinement) {
    Problem P = reference_problem(128);
    P.drift = zero_drift(1);
    const double a = schauder_ratio(solve_viscosity(P, 0, {16, 2e-3}), P).ratio;
    const double b = schauder_ratio(solve_viscosity(P, 0, {32, 1e-3}), P).ratio;
    EXPECT_TRUE(std::isfinite(a));
    EXPECT_NEAR(b / a, 1.0, 0.1);
}

TEST(Schauder, DriftOffsetsAndLinearDrift) {
    std::vector<double> ratios;
    for (double c : {0.0, 10.0, 100.0}) {
        const Problem P = schauder_problem(shifted_sin(c, 1.0, 0.5));
        ratios.push_back(schauder_ratio(solve_viscosity(P, 0, {16, 1e-3}), P).ratio);
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    EXPECT_LE(*hi / *lo - 1, 0.2) << ratios[0] << ' ' << ratios[1] << ' ' << ratios[2];
    const Problem ou = schauder_problem(linear_drift({-1.0}));
    const double r = schauder_ratio(solve_viscosity(ou, 0, {16, 1e-3}), ou).ratio;
    EXPECT_TRUE(std::isfinite(r));
    EXPECT_GT(r, 0);
}

TEST(FracOp, EigenfunctionConstantAndRefinement) {
    const auto cosfam = std::vector<TestFunction>{frac_op_family(1.2).front()};
    EXPECT_LE(frac_op_holder_check(0.7, 0.5, G1, cosfam).max_ratio, 1.0);
    const std::vector<TestFunction> cst{{"one", [](double) { return 1.0; }, [](double) { return 0.0; }}};
    EXPECT_NEAR(frac_op_holder_check(0.7, 0.5, G1, cst).max_ratio, 0.0, 1e-10);
    for (auto [th, ga] : {std::pair{0.7, 0.5}, std::pair{1.0, 0.3}}) {
        const auto r = frac_op_holder_check(th, ga, G1, frac_op_family(th + ga));
        EXPECT_EQ(r.ratios.size(), 10u);
        EXPECT_TRUE(std::isfinite(r.max_ratio));
        EXPECT_LE(r.refinement_delta, 0.15) << th << ' ' << ga;
    }
    const auto viaModel = frac_op_holder_check(isotropic(0.7, 1), 0.5, G1, frac_op_family(1.2));
    const auto viaTheta = frac_op_holder_check(0.7, 0.5, G1, frac_op_family(1.2));
    EXPECT_NEAR(viaModel.max_ratio, viaTheta.max_ratio, 1e-6 * viaTheta.max_ratio);
    EXPECT_THROW(frac_op_holder_check(0.5, 0.3, G1, cosfam), ValidationError);
}
