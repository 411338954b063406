#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "kernel_engine.hpp"
#include "quadrature.hpp"
#include "spectral_models.hpp"
#include "subordinator.hpp"

namespace stablab {

/// Split of one sample into the jumps below and above the threshold t^{1/alpha}.
struct SampleTag {
    Point small{};  // M_t: compensated small jumps
    Point large{};  // N_t: jumps larger than t^{1/alpha}
};

struct SamplePack {
    double t = 0;
    int dim = 1;
    std::vector<Point> points;
    std::vector<SampleTag> tags;  // empty unless tagging was requested
};

namespace detail {

// Chambers-Mallows-Stuck for the symmetric law with characteristic function exp(-|lambda|^alpha).
template <class Rng>
double cms_symmetric(double alpha, Rng& rng) {
    std::uniform_real_distribution<double> U(-M_PI / 2, M_PI / 2);
    std::exponential_distribution<double> E(1.0);
    const double V = U(rng), W = E(rng);
    return std::sin(alpha * V) / std::pow(std::cos(V), 1 / alpha) *
           std::pow(std::cos((1 - alpha) * V) / W, (1 - alpha) / alpha);
}

inline bool constant_density(const StableModel& m) {
    if (m.kind != Kind::SmoothSpectralDensity || m.dim == 1) return true;
    const auto& w = m.profile->w;
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    return *hi - *lo <= 1e-12 * *hi;
}

/// Polar Levy measure nu = rho^{-1-alpha} d rho mu_tilde(ds), sampled through its jumps.
/// Jumps below eps are replaced by a Gaussian with the same covariance.
class JumpSampler {
public:
    JumpSampler(const StableModel& m, double t) : m_(m), t_(t) {
        if (m.dim == 1 || m.kind == Kind::Cylindrical) {
            for (const auto& d : sphere_rule(m)) {
                dirs_.push_back(d.s);
                cum_.push_back((cum_.empty() ? 0.0 : cum_.back()) + d.weight);
            }
        } else {
            // fine rule on the circle from the angular density
            for (const auto& d : sphere_rule(m, 4096)) {
                dirs_.push_back(d.s);
                cum_.push_back((cum_.empty() ? 0.0 : cum_.back()) + d.weight);
            }
        }
        total_ = cum_.back();
        for (std::size_t i = 0; i < dirs_.size(); ++i) {
            const double w = cum_[i] - (i ? cum_[i - 1] : 0.0);
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) cov_[a][b] += w * dirs_[i][a] * dirs_[i][b];
        }
        threshold_ = std::pow(t, 1 / m.alpha);
        cap_ = m.kind == Kind::Truncated ? m.trunc_radius : INFINITY;
        eps_ = 1e-3 * std::min(threshold_, cap_);
    }

    /// Sum of the jumps with radius in (lo, hi], by a Poisson count of i.i.d. jumps.
    template <class Rng>
    Point band(double lo, double hi, Rng& rng) const {
        Point acc{0, 0};
        if (hi <= lo) return acc;
        const double a = m_.alpha;
        const double mlo = std::pow(lo, -a), mhi = std::isfinite(hi) ? std::pow(hi, -a) : 0.0;
        std::poisson_distribution<long> P(t_ * total_ * (mlo - mhi) / a);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        const long k = P(rng);
        for (long j = 0; j < k; ++j) {
            const double rho = std::pow(mlo - U(rng) * (mlo - mhi), -1 / a);
            const Point& s = direction(U(rng));
            acc[0] += rho * s[0];
            acc[1] += rho * s[1];
        }
        return acc;
    }

    /// Gaussian stand-in for the jumps below eps (covariance t eps^{2-alpha}/(2-alpha) int s s^T mu_tilde).
    template <class Rng>
    Point gaussian_small(Rng& rng) const {
        std::normal_distribution<double> N(0.0, 1.0);
        const double f = t_ * std::pow(eps_, 2 - m_.alpha) / (2 - m_.alpha);
        const double c00 = f * cov_[0][0], c01 = f * cov_[0][1], c11 = f * cov_[1][1];
        const double l00 = std::sqrt(c00);
        const double l10 = l00 > 0 ? c01 / l00 : 0.0;
        const double l11 = std::sqrt(std::max(0.0, c11 - l10 * l10));
        const double z0 = N(rng), z1 = N(rng);
        return {l00 * z0, m_.dim == 2 ? l10 * z0 + l11 * z1 : 0.0};
    }

    template <class Rng>
    SampleTag draw(Rng& rng) const {
        SampleTag tag;
        const double cut = std::min(threshold_, cap_);
        const Point g = gaussian_small(rng), mid = band(eps_, cut, rng);
        tag.small = {g[0] + mid[0], g[1] + mid[1]};
        tag.large = band(threshold_, cap_, rng);
        return tag;
    }

private:
    const Point& direction(double u) const {
        const auto it = std::upper_bound(cum_.begin(), cum_.end(), u * total_);
        return dirs_[std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), dirs_.size() - 1)];
    }

    StableModel m_;
    double t_;
    std::vector<Point> dirs_;
    std::vector<double> cum_;
    double total_ = 0, threshold_ = 0, cap_ = 0, eps_ = 0;
    double cov_[2][2] = {{0, 0}, {0, 0}};
};

}  // namespace detail

/// i.i.d. samples of the time-t marginal.
/// Exact samplers: Chambers-Mallows-Stuck in 1-d and per coordinate for Cylindrical; Gaussian
/// subordination X = sqrt(2 S_t) Z for the isotropic kind in 2-d; tilted subordination with
/// rejection weight exp(-m^{2/alpha} S_t) for Relativistic. Truncated kernels, and tagged draws,
/// use the jump construction with the threshold t^{1/alpha} and a Gaussian for jumps below
/// 1e-3 of the smaller of threshold and truncation radius.
inline SamplePack sample_stable(const StableModel& m, double t, std::size_t n, std::uint64_t seed, bool tag = false) {
    require(n >= 1, "sample_stable: need n >= 1");
    require(t > 0 && std::isfinite(t), "sample_stable: t must be positive");
    if (!detail::constant_density(m))
        throw ValidationError("sample_stable: no exact sampler for a non-constant spectral density; use the density_fft oracle instead");
    require(!(tag && m.kind == Kind::Relativistic), "sample_stable: jump tagging needs a stable Levy measure");
    std::mt19937_64 rng(seed);
    SamplePack out;
    out.t = t;
    out.dim = m.dim;
    out.points.reserve(n);
    if (tag || m.kind == Kind::Truncated) {
        const detail::JumpSampler js(m, t);
        for (std::size_t i = 0; i < n; ++i) {
            const SampleTag s = js.draw(rng);
            out.points.push_back({s.small[0] + s.large[0], s.small[1] + s.large[1]});
            if (tag) out.tags.push_back(s);
        }
        return out;
    }
    std::normal_distribution<double> Z(0.0, 1.0);
    if (m.kind == Kind::Relativistic) {
        const auto S = SubordinatorDensity::get(m.alpha / 2);
        const double tau = std::pow(t, 2 / m.alpha), M = m.mass_exponent();
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s;
            do s = tau * S->sample(rng);
            while (U(rng) > std::exp(-M * s));
            const double sd = std::sqrt(2 * s);
            out.points.push_back({sd * Z(rng), m.dim == 2 ? sd * Z(rng) : 0.0});
        }
        return out;
    }
    if (m.dim == 1 || m.kind == Kind::Cylindrical) {
        std::vector<double> scale(m.dim);
        for (int a = 0; a < m.dim; ++a)
            scale[a] = std::pow(t * (m.kind == Kind::Cylindrical ? m.atoms[a] : 1.0), 1 / m.alpha);
        for (std::size_t i = 0; i < n; ++i) {
            Point p{0, 0};
            for (int a = 0; a < m.dim; ++a) p[a] = scale[a] * detail::cms_symmetric(m.alpha, rng);
            out.points.push_back(p);
        }
        return out;
    }
    // isotropic in 2-d: E exp(i <lambda, sqrt(2S) Z>) = E exp(-S |lambda|^2) = exp(-t |lambda|^alpha)
    const auto S = SubordinatorDensity::get(m.alpha / 2);
    const double tau = std::pow(t, 2 / m.alpha);
    for (std::size_t i = 0; i < n; ++i) {
        const double sd = std::sqrt(2 * tau * S->sample(rng));
        out.points.push_back({sd * Z(rng), sd * Z(rng)});
    }
    return out;
}

/// Distribution function of a 1-d density field: cumulative trapezoid plus half the exterior mass
/// on the left; outside the box the exterior mass is spread with the power law |x|^{-alpha}.
class GridCdf {
public:
    explicit GridCdf(const DensityField& d) : g_(d.grid), alpha_(d.alpha), tail_(0.5 * d.tail_mass_estimate) {
        require(d.grid.dim == 1, "GridCdf: needs a 1-d field");
        const double h = g_.spacing();
        c_.resize(g_.n);
        c_[0] = tail_;
        for (std::size_t j = 1; j < g_.n; ++j) c_[j] = c_[j - 1] + 0.5 * h * (d.p[j - 1] + d.p[j]);
    }
    double operator()(double x) const {
        const double L = g_.half_extent;
        if (x < -L) return tail_ * std::pow(-x / L, -alpha_);
        if (x > L) return 1 - tail_ * std::pow(x / L, -alpha_);
        return std::clamp(interp_uniform(c_, g_.coord(0), g_.spacing(), x), 0.0, 1.0);
    }

private:
    GridSpec g_;
    double alpha_, tail_;
    std::vector<double> c_;
};

/// L1 distance between the histogram of xs (bins of width w on [lo, hi]) and the bin averages of a 1-d density.
inline double histogram_l1_distance(const std::vector<double>& xs, const DensityField& d, double lo, double hi,
                                    double w) {
    require(d.grid.dim == 1, "histogram_l1_distance: needs a 1-d field");
    require(lo >= -d.grid.half_extent && hi <= d.grid.half_extent, "histogram_l1_distance: range exceeds the grid");
    const auto nb = static_cast<std::size_t>(std::llround((hi - lo) / w));
    std::vector<double> count(nb, 0.0);
    for (double x : xs) {
        if (x < lo || x >= hi) continue;
        count[std::min(nb - 1, static_cast<std::size_t>((x - lo) / w))] += 1;
    }
    const double n = static_cast<double>(xs.size());
    double l1 = 0;
    for (std::size_t b = 0; b < nb; ++b) {
        const double a = lo + b * w;
        const double mass = composite_gl<8>([&](double x) { return detail::clamp_interp_1d(d.grid, d.p.data(), x); },
                                            a, a + w, 4);
        l1 += std::abs(count[b] / n - mass);
    }
    return l1;
}

}  // namespace stablab
