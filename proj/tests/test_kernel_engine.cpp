#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "stablab/kernel_engine.hpp"
#include "stablab/sampling.hpp"
#include "stablab/stats.hpp"

using namespace stablab;

namespace {

std::size_t axis_size(int dim) { return dim == 1 ? 4096 : 1024; }

DensityField kernel(const StableModel& m, double t) { return density_fft(m, t, admissible_grid(m, t, axis_size(m.dim))); }

std::vector<double> first_coords(const SamplePack& s) {
    std::vector<double> x;
    for (const auto& p : s.points) x.push_back(p[0]);
    return x;
}

}  // namespace

TEST(TailSeries, MatchesLowOrderCoefficientAndDerivatives) {
    // leading 1-d coefficient Gamma(1+alpha) sin(pi alpha/2) / pi
    const TailSeries ts(isotropic(0.6, 1));
    const double y = 1e10;
    EXPECT_NEAR(ts.value(1, {y, 0}) * std::pow(y, 1.6) / (std::tgamma(1.6) * std::sin(0.3 * M_PI) / M_PI), 1.0, 1e-5);
    const TailSeries t2(smooth_density(0.6, 2, trig_density(0.5)));
    const Point p{3.0, -2.0};
    const Jet j = t2.jet(1, p);
    const double h = 1e-4;
    for (int a = 0; a < 2; ++a) {
        Point u = p, d = p;
        u[a] += h;
        d[a] -= h;
        EXPECT_NEAR(j.g[a], (t2.value(1, u) - t2.value(1, d)) / (2 * h), 1e-8);
        const Jet ju = t2.jet(1, u), jd = t2.jet(1, d);
        EXPECT_NEAR(j.H[a], (ju.g[0] - jd.g[0]) / (2 * h), 1e-8);
    }
}

TEST(Subordinator, LaplaceTransformAndSampler) {
    for (double rho : {0.3, 0.35, 0.4}) {
        const SubordinatorDensity S(rho);
        const double l0 = S.log_lower(), l1 = std::log(1e8);
        const int n = 6000;
        const double dl = (l1 - l0) / n;
        for (double s : {0.5, 2.0}) {
            double I = 0;
            for (int i = 0; i <= n; ++i) {
                const double u = std::exp(l0 + i * dl);
                I += (i == 0 || i == n ? 0.5 : 1.0) * S.density(u) * u * std::exp(-s * u);
            }
            EXPECT_NEAR(I * dl, std::exp(-std::pow(s, rho)), 1e-9);
        }
        std::mt19937_64 rng(7);
        double acc = 0;
        const int m = 200000;
        for (int i = 0; i < m; ++i) acc += std::exp(-S.sample(rng));
        EXPECT_NEAR(acc / m, std::exp(-1.0), 4e-3);
    }
}

TEST(DensityFft, ClosedFormAnchor) {
    const auto d = density_fft(isotropic(0.5, 1), 1, GridSpec(1, 200, 1 << 16));
    EXPECT_NEAR(d.p[1 << 15] / (2 / M_PI), 1.0, 1e-3);
    EXPECT_NEAR(d.total_mass(), 1.0, 1e-3);
}

TEST(DensityFft, UnitMassAcrossKinds) {
    for (int dim : {1, 2})
        for (double al : {0.6, 0.8})
            for (double t : {0.25, 1.0})
                for (const auto& m : {isotropic(al, dim), cylindrical(al, dim), smooth_density(al, dim, trig_density(0.5))}) {
                    const auto d = kernel(m, t);
                    EXPECT_NEAR(d.total_mass(), 1.0, 1e-3) << kind_name(m.kind) << " d=" << dim << " a=" << al;
                    EXPECT_FALSE(d.ringing_flagged);
                }
}

TEST(DensityFft, CylindricalIsProductOfMarginals) {
    const auto m = cylindrical(0.7, 2);
    const auto g = admissible_grid(m, 1, 512);
    const auto d = density_fft(m, 1, g);
    const auto q = density_fft(cylindrical(0.7, 1), 1, GridSpec(1, g.half_extent, g.n));
    double worst = 0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            const double ref = q.p[i] * q.p[j];
            worst = std::max(worst, std::abs(d.p[i * g.n + j] - ref) / ref);
        }
    EXPECT_LT(worst, 1e-3);
}

TEST(DensityFft, ParitySymmetry) {
    for (const auto& m : {isotropic(0.6, 1), smooth_density(0.7, 2, trig_density(0.5)), cylindrical(0.6, 2)}) {
        const auto d = m.dim == 1 ? kernel(m, 1) : density_fft(m, 1, admissible_grid(m, 1, 512));
        const auto& g = d.grid;
        const double pm = sup_norm(d.p), hm = sup_norm(d.d2p[0]);
        const double gm[2] = {sup_norm(d.dp[0]), g.dim == 2 ? sup_norm(d.dp[1]) : 0.0};
        for (std::size_t i = 0; i < g.size(); i += 7) {
            // mirror index of -y; the first row/column (y = -L) has no mirror on the grid
            const Point y = g.point(i);
            if (y[0] == -g.half_extent || (g.dim == 2 && y[1] == -g.half_extent)) continue;
            const std::size_t k = g.dim == 1 ? g.n - i : (g.n - i / g.n) * g.n + (g.n - i % g.n);
            EXPECT_NEAR(d.p[i], d.p[k], 1e-10 * pm);
            for (int a = 0; a < g.dim; ++a) EXPECT_NEAR(d.dp[a][i], -d.dp[a][k], 1e-10 * gm[a]);
            EXPECT_NEAR(d.d2p[0][i], d.d2p[0][k], 1e-10 * hm);
        }
    }
}

TEST(DensityFft, SelfSimilarity) {
    for (const auto& m : {isotropic(0.6, 1), isotropic(0.8, 2), smooth_density(0.7, 2, trig_density(0.5))}) {
        const std::size_t N = m.dim == 1 ? 4096 : 512;
        const auto d1 = density_fft(m, 1, admissible_grid(m, 1, N));
        for (double t : {0.25, 0.5}) {
            // admissible grids scale like t^{1/alpha}, so the nodes correspond one to one
            const auto g = admissible_grid(m, t, N);
            const auto dt = density_fft(m, t, g);
            const double s = std::pow(t, 1 / m.alpha);
            EXPECT_NEAR(g.half_extent / d1.grid.half_extent, s, 1e-9 * s);
            double worst = 0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (norm(g.point(i), m.dim) > 5 * s) continue;
                const double ref = d1.p[i] / std::pow(s, m.dim);
                worst = std::max(worst, std::abs(dt.p[i] - ref) / ref);
            }
            EXPECT_LT(worst, 1e-3) << kind_name(m.kind) << " t=" << t;
        }
    }
}

TEST(DensityFft, DerivativesMatchFiniteDifferences) {
    const auto d = kernel(isotropic(0.7, 1), 1);
    const auto& g = d.grid;
    const double h = g.spacing();
    double d3 = 0;
    for (std::size_t i = 1; i + 1 < g.n; ++i) d3 = std::max(d3, std::abs(d.d2p[0][i + 1] - d.d2p[0][i - 1]) / (2 * h));
    for (std::size_t i = 1; i + 1 < g.n; ++i) {
        EXPECT_LE(std::abs(d.dp[0][i] - (d.p[i + 1] - d.p[i - 1]) / (2 * h)), 10 * h * h * d3);
        EXPECT_LE(std::abs(d.d2p[0][i] - (d.dp[0][i + 1] - d.dp[0][i - 1]) / (2 * h)), 10 * h * h * d3 * 10);
    }
}

TEST(DensityFft, GlobalDerivativeBoundScales) {
    const auto m = isotropic(0.6, 1);
    std::vector<double> C[3];
    for (double t : {1.0, 0.5, 0.25, 0.125}) {
        const auto d = kernel(m, t);
        C[0].push_back(sup_norm(d.p) * std::pow(t, 1 / 0.6));
        C[1].push_back(sup_norm(d.dp[0]) * std::pow(t, 2 / 0.6));
        C[2].push_back(sup_norm(d.d2p[0]) * std::pow(t, 3 / 0.6));
    }
    for (auto& c : C)
        for (double v : c) EXPECT_LE(v, 1.05 * c[0]);
}

TEST(DensityFft, Guards) {
    const auto m = isotropic(0.6, 1);
    // aliasing: the characteristic function has not decayed at the Nyquist frequency
    EXPECT_THROW(density_fft(m, 1e-3, GridSpec(1, 40, 1024)), NumericalGuard);
    // support: box narrower than a few kernel scales
    EXPECT_THROW(density_fft(m, 1, GridSpec(1, 2, 4096)), NumericalGuard);
    EXPECT_THROW(density_fft(relativistic(0.6, 1, 1), 1, GridSpec(1, 40, 4096)), ValidationError);
    EXPECT_THROW(density_fft(m, 0.0, GridSpec(1, 40, 4096)), ValidationError);
    // light tails: truncated kernel whose support exceeds the box
    EXPECT_THROW(density_fft(truncated(0.6, 1, 50), 1, GridSpec(1, 4, 1024)), NumericalGuard);
}

TEST(DensityFft, TruncatedKernel) {
    const auto m = truncated(0.6, 1, 2.0);
    const auto d = density_fft(m, 1, GridSpec(1, 40, 8192));
    EXPECT_NEAR(d.total_mass(), 1.0, 1e-3);
    EXPECT_LT(d.tail_mass_estimate, 1e-3);
    // value at the origin against (1/pi) int_0^inf exp(Psi_K(lambda)) d lambda
    const double ref = composite_gl<8>([&](double l) { return std::exp(symbol(m, {l, 0})); }, 0, 3000, 6000) / M_PI;
    EXPECT_NEAR(d.p[4096] / ref, 1.0, 1e-6);
}

TEST(Relativistic, MassZeroMatchesStable) {
    for (int dim : {1, 2}) {
        const auto m0 = isotropic(0.7, dim);
        const auto g = dim == 1 ? admissible_grid(m0, 0.5, 2048) : admissible_grid(m0, 0.5, 512);
        const auto ref = density_fft(m0, 0.5, g);
        const auto rel = density_relativistic(relativistic(0.7, dim, 0.0), 0.5, g);
        const double pm = sup_norm(ref.p);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_NEAR(rel.p[i], ref.p[i], 2e-3 * pm);
        const double gm = sup_norm(ref.dp[0]);
        for (std::size_t i = 0; i < g.size(); i += 3) ASSERT_NEAR(rel.dp[0][i], ref.dp[0][i], 2e-3 * gm);
        EXPECT_NEAR(rel.total_mass(), 1.0, 2e-3);
    }
}

TEST(Relativistic, BoundedByTiltedStableAndNormalized) {
    const auto g = GridSpec(1, 30, 1 << 15);
    for (double t : {0.1, 0.5, 1.0}) {
        const auto pm = density_relativistic(relativistic(0.7, 1, 1.0), t, g);
        const auto p0 = density_relativistic(relativistic(0.7, 1, 0.0), t, g);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_LE(pm.p[i], std::exp(1.0) * p0.p[i] + 1e-4);
        EXPECT_NEAR(pm.total_mass(), 1.0, 2e-3);
    }
}

TEST(Relativistic, MatchesSpectralInversion) {
    // the relativistic kernel has light tails, so the periodized Fourier inversion is an accurate oracle
    const auto m = relativistic(0.7, 1, 1.0);
    const auto g = GridSpec(1, 30, 1 << 15);
    for (double t : {0.1, 0.5}) {
        const auto d = density_relativistic(m, t, g);
        const auto ref = detail::periodic_fields(m, t, g);
        const double pm = sup_norm(ref.p), gm = sup_norm(ref.dp[0]), hm = sup_norm(ref.d2p[0]);
        for (std::size_t i = 0; i < g.n; i += 5) {
            ASSERT_NEAR(d.p[i], ref.p[i], 1e-6 * pm);
            ASSERT_NEAR(d.dp[0][i], ref.dp[0][i], 1e-5 * gm);
            ASSERT_NEAR(d.d2p[0][i], ref.d2p[0][i], 1e-4 * hm);
        }
    }
    EXPECT_THROW(relativistic(0.7, 1, -1.0), ValidationError);
    EXPECT_THROW(density_relativistic(m, 0.5, g, 32), ValidationError);
    EXPECT_THROW(density_relativistic(m, 1.5, g), ValidationError);
}

TEST(Sampling, HistogramAgreesWithQuadrature) {
    const auto m = isotropic(0.7, 1);
    const auto s = sample_stable(m, 1, 1000000, 11);
    EXPECT_LE(histogram_l1_distance(first_coords(s), kernel(m, 1), -10, 10, 0.1), 0.02);
}

TEST(Sampling, ScalingInLaw) {
    for (const auto& m : {isotropic(0.7, 1), isotropic(0.6, 2), cylindrical(0.6, 2)}) {
        const double t = 0.3, s = std::pow(t, 1 / m.alpha);
        const auto a = sample_stable(m, t, 100000, 1), b = sample_stable(m, 1, 100000, 2);
        std::vector<double> xa, xb;
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            xa.push_back(norm(a.points[i], m.dim) * (m.dim == 1 ? (a.points[i][0] > 0 ? 1 : -1) : 1));
            xb.push_back(s * norm(b.points[i], m.dim) * (m.dim == 1 ? (b.points[i][0] > 0 ? 1 : -1) : 1));
        }
        EXPECT_LT(ks_two_sample(xa, xb), ks_critical(xa.size(), xb.size(), 0.01)) << kind_name(m.kind);
    }
}

TEST(Sampling, CylindricalMarginalsAndIsotropicCoordinate) {
    const auto q = kernel(cylindrical(0.6, 1), 1);
    const GridCdf F(q);
    const auto s = sample_stable(cylindrical(0.6, 2), 1, 100000, 5);
    for (int a = 0; a < 2; ++a) {
        std::vector<double> x;
        for (const auto& p : s.points) x.push_back(p[a]);
        EXPECT_LT(ks_one_sample(x, F), ks_critical_one(x.size(), 0.01));
    }
    // a coordinate of the 2-d isotropic law has characteristic function exp(-|lambda_1|^alpha)
    const GridCdf G(kernel(isotropic(0.7, 1), 1));
    const auto s2 = sample_stable(isotropic(0.7, 2), 1, 100000, 6);
    for (int a = 0; a < 2; ++a) {
        std::vector<double> x;
        for (const auto& p : s2.points) x.push_back(p[a]);
        EXPECT_LT(ks_one_sample(x, G), ks_critical_one(x.size(), 0.01));
    }
}

TEST(Sampling, JumpConstructionAndTags) {
    const auto m = isotropic(0.7, 1);
    const auto tagged = sample_stable(m, 1, 100000, 3, true);
    ASSERT_EQ(tagged.tags.size(), tagged.points.size());
    for (std::size_t i = 0; i < 100; ++i)
        EXPECT_DOUBLE_EQ(tagged.points[i][0], tagged.tags[i].small[0] + tagged.tags[i].large[0]);
    const auto exact = sample_stable(m, 1, 100000, 4);
    EXPECT_LT(ks_two_sample(first_coords(tagged), first_coords(exact)), ks_critical(100000, 100000, 0.01));
    // N_t equals t^{1/alpha} N_1 in law
    const double t = 0.2, s = std::pow(t, 1 / 0.7);
    const auto a = sample_stable(m, t, 100000, 8, true), b = sample_stable(m, 1, 100000, 9, true);
    std::vector<double> na, nb;
    for (const auto& tg : a.tags) na.push_back(tg.large[0]);
    for (const auto& tg : b.tags) nb.push_back(s * tg.large[0]);
    EXPECT_LT(ks_two_sample(na, nb), ks_critical(na.size(), nb.size(), 0.01));
}

TEST(Sampling, TruncatedAndRelativisticAgainstDensities) {
    const auto mt = truncated(0.6, 1, 2.0);
    const auto st = sample_stable(mt, 1, 50000, 21);
    const GridCdf Ft(density_fft(mt, 1, GridSpec(1, 40, 8192)));
    EXPECT_LT(ks_one_sample(first_coords(st), Ft), ks_critical_one(50000, 0.01));
    const auto mr = relativistic(0.7, 1, 1.0);
    const auto sr = sample_stable(mr, 0.5, 50000, 22);
    const GridCdf Fr(density_relativistic(mr, 0.5, GridSpec(1, 60, 4096)));
    EXPECT_LT(ks_one_sample(first_coords(sr), Fr), ks_critical_one(50000, 0.01));
}

TEST(Sampling, WinsorizedMeanNearZeroAndRejections) {
    const auto s = sample_stable(isotropic(0.8, 2), 1, 200000, 13);
    for (int a = 0; a < 2; ++a) {
        std::vector<double> x;
        for (const auto& p : s.points) x.push_back(p[a]);
        const auto w = winsorized_stats(x);
        EXPECT_LT(std::abs(w.mean), 4 * w.sigma / std::sqrt(static_cast<double>(x.size())));
    }
    EXPECT_THROW(sample_stable(smooth_density(0.7, 2, trig_density(0.5)), 1, 10, 1), ValidationError);
    EXPECT_NO_THROW(sample_stable(smooth_density(0.7, 2, std::vector<double>(64, 2.0)), 1, 10, 1));
    EXPECT_THROW(sample_stable(isotropic(0.7, 1), 1, 0, 1), ValidationError);
}

TEST(Persistence, BinaryRoundTripAndRadialCsv) {
    const auto m = smooth_density(0.7, 2, trig_density(0.3));
    const auto d = density_fft(m, 1, admissible_grid(m, 1, 512));
    const std::string path = testing::TempDir() + "kernel.sipk";
    write_density(d, path);
    const auto r = read_density(path);
    EXPECT_EQ(r.grid.n, d.grid.n);
    EXPECT_EQ(r.kind, Kind::SmoothSpectralDensity);
    EXPECT_DOUBLE_EQ(r.alpha, 0.7);
    EXPECT_EQ(r.p, d.p);
    EXPECT_EQ(r.dp[1], d.dp[1]);
    EXPECT_EQ(r.d2p[1], d.d2p[1]);
    std::ifstream is(path, std::ios::binary);
    char magic[6] = {};
    is.read(magic, 5);
    EXPECT_STREQ(magic, "SIPK1");
    const std::string csv = testing::TempDir() + "kernel.csv";
    write_radial_csv(d, csv);
    std::ifstream c(csv);
    std::string header;
    std::getline(c, header);
    EXPECT_EQ(header, "r,p,dp_r,d2p_rr");
    std::ofstream bad(path, std::ios::binary);
    bad << "NOPE";
    bad.close();
    EXPECT_THROW(read_density(path), ValidationError);
}
