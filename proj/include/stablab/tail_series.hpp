#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "fft.hpp"
#include "spectral_models.hpp"

namespace stablab {

namespace detail {

// 1 / Gamma(z), finite at the poles of Gamma.
inline double rgamma(double z) {
    if (z > 0) return 1.0 / std::tgamma(z);
    return std::tgamma(1 - z) * std::sin(M_PI * z) / M_PI;
}

}  // namespace detail

/// Value, gradient and Hessian {xx, xy, yy} of a scalar field at one point.
struct Jet {
    double v = 0;
    std::array<double, 2> g{};
    std::array<double, 3> H{};
};

/// Convergent large-|y| expansion of a strictly stable density,
/// p(t,y) = sum_k t^k r^{-d-k alpha} c_k(angle),
/// obtained by expanding exp(t Psi) in powers of t and inverting each homogeneous term.
/// Available for the radial-homogeneous kinds in d = 1 and for the isotropic/smooth kinds in d = 2.
class TailSeries {
public:
    TailSeries() = default;

    explicit TailSeries(const StableModel& m) : dim_(m.dim), alpha_(m.alpha) {
        require(m.symmetric_stable() && !(m.dim == 2 && m.kind == Kind::Cylindrical),
                "tail series: needs a homogeneous non-cylindrical symbol (use the product form in 2d)");
        const double a = m.scale_1d();
        if (dim_ == 1) {
            for (int k = 1; k <= kMax; ++k) {
                const double s = k * alpha_;
                // pi^{-1/2} (-1)^k / k! 2^s Gamma((1+s)/2) / Gamma(-s/2), times a^k
                const double c = std::pow(-1.0, k) * std::exp(s * std::log(2.0) + std::lgamma(0.5 * (1 + s)) -
                                                             std::lgamma(k + 1.0) + k * std::log(a)) *
                                 detail::rgamma(-0.5 * s) / std::sqrt(M_PI);
                c1d_.push_back(c);
                bound_.push_back(std::abs(c));
            }
            return;
        }
        // angular profile on the node set of the model
        const std::size_t M = detail::kAngularNodes;
        std::vector<double> phi(M, 1.0);
        if (m.profile) phi = m.profile->phi;
        const GridSpec dummy(1, M_PI, M);  // only used to reach the FFT plan cache
        std::vector<double> pk(M, 1.0);
        for (int k = 1; k <= kMax; ++k) {
            for (std::size_t j = 0; j < M; ++j) pk[j] *= phi[j];
            CField w(pk.begin(), pk.end());
            fft_inplace(dummy, w, FFTW_FORWARD);
            const double s = k * alpha_;
            std::vector<cplx> modes;
            double big = 0;
            for (int n = 0; n <= kModes; n += 2) {
                const cplx omega = w[static_cast<std::size_t>(n)] / static_cast<double>(M);
                const double G = std::exp((s + 1) * std::log(2.0) + std::lgamma(0.5 * (n + s + 2))) *
                                 detail::rgamma(0.5 * (n - s));
                const double sign = std::pow(-1.0, k) * ((n / 2) % 2 ? -1.0 : 1.0);
                const double fac = sign * std::exp(-std::lgamma(k + 1.0)) / (2 * M_PI) * (n == 0 ? 1.0 : 2.0);
                modes.push_back(fac * G * omega);
                big = std::max(big, std::abs(modes.back()));
            }
            while (modes.size() > 1 && std::abs(modes.back()) <= 1e-18 * big) modes.pop_back();
            max_modes_ = std::max(max_modes_, modes.size());
            double b = 0;
            for (std::size_t j = 0; j < modes.size(); ++j) b += std::abs(modes[j]) * (1.0 + 4.0 * j * j);
            bound_.push_back(b);
            c2d_.push_back(std::move(modes));
        }
    }

    int dim() const { return dim_; }

    double value(double t, const Point& y) const { return jet(t, y).v; }

    /// Series value and its first two derivatives at y (|y| > 0).
    Jet jet(double t, const Point& y) const {
        const double r = norm(y, dim_);
        require(r > 0, "tail series: needs y != 0");
        Jet out;
        const double step = t * std::exp(-alpha_ * std::log(r));
        double R = 1.0 / (dim_ == 1 ? r : r * r);
        int quiet = 0;  // individual terms vanish at isolated k, so wait for a run of small ones
        if (dim_ == 1) {
            const double sg = y[0] > 0 ? 1.0 : -1.0;
            for (int k = 1; k <= kMax; ++k) {
                R *= step;
                const double q = 1 + k * alpha_;
                const double term = c1d_[k - 1] * R;
                out.v += term;
                out.g[0] -= sg * q * term / r;
                out.H[0] += q * (q + 1) * term / (r * r);
                if (stop(bound_[k - 1] * R, out.v, quiet)) break;
            }
            return out;
        }
        const double c = y[0] / r, s = y[1] / r;
        std::array<cplx, kModes / 2 + 1> e;
        const cplx e1(c * c - s * s, 2 * c * s);  // e^{2 i phi}
        e[0] = 1;
        for (std::size_t j = 1; j < max_modes_; ++j) e[j] = e[j - 1] * e1;
        double f = 0, fr = 0, frr = 0, fp = 0, fpp = 0, frp = 0;
        for (int k = 1; k <= kMax; ++k) {
            R *= step;
            const double q = 2 + k * alpha_;
            const auto& modes = c2d_[k - 1];
            double A = 0, A1 = 0, A2 = 0;
            for (std::size_t j = 0; j < modes.size(); ++j) {
                const cplx z = modes[j] * e[j];
                const double n = 2.0 * static_cast<double>(j);
                A += z.real();
                A1 -= n * z.imag();
                A2 -= n * n * z.real();
            }
            f += R * A;
            fr -= q / r * R * A;
            frr += q * (q + 1) / (r * r) * R * A;
            fp += R * A1;
            fpp += R * A2;
            frp -= q / r * R * A1;
            if (stop(bound_[k - 1] * R, f, quiet)) break;
        }
        const double r2 = r * r;
        out.v = f;
        out.g = {c * fr - s / r * fp, s * fr + c / r * fp};
        out.H[0] = c * c * frr + s * s / r * fr + s * s / r2 * fpp - 2 * c * s / r * frp + 2 * c * s / r2 * fp;
        out.H[1] = c * s * frr - c * s / r * fr - c * s / r2 * fpp + (c * c - s * s) / r * frp -
                   (c * c - s * s) / r2 * fp;
        out.H[2] = s * s * frr + c * c / r * fr + c * c / r2 * fpp + 2 * c * s / r * frp - 2 * c * s / r2 * fp;
        return out;
    }

    /// Mass of the series outside the cube [-R, R]^d.
    double exterior_mass(double t, double R) const {
        if (dim_ == 1) {
            double s = 0;
            int quiet = 0;
            for (int k = 1; k <= kMax; ++k) {
                const double w = 2 * std::pow(t, k) * std::pow(R, -k * alpha_) / (k * alpha_);
                s += c1d_[k - 1] * w;
                if (stop(bound_[k - 1] * w, s, quiet)) break;
            }
            return s;
        }
        const int nphi = 4096;
        double s = 0;
        int quiet = 0;
        for (int k = 1; k <= kMax; ++k) {
            const auto& modes = c2d_[k - 1];
            double acc = 0, env = 0;
            for (int j = 0; j < nphi; ++j) {
                const double ph = 2 * M_PI * (j + 0.5) / nphi;
                const double rho = R / std::max(std::abs(std::cos(ph)), std::abs(std::sin(ph)));
                const cplx e1 = std::polar(1.0, 2 * ph);
                cplx e = 1;
                double ang = 0;
                for (const auto& b : modes) {
                    ang += (b * e).real();
                    e *= e1;
                }
                const double w = std::pow(rho, -k * alpha_);
                acc += ang * w;
                env += w;
            }
            const double scale = std::pow(t, k) * (2 * M_PI / nphi) / (k * alpha_);
            s += acc * scale;
            if (stop(bound_[k - 1] * env * scale, s, quiet)) break;
        }
        return s;
    }

private:
    static constexpr int kMax = 60;
    static constexpr int kModes = 48;

    static bool stop(double envelope, double sum, int& quiet) {
        quiet = envelope < 1e-17 * std::abs(sum) ? quiet + 1 : 0;
        return quiet >= 3;
    }

    int dim_ = 1;
    double alpha_ = 0.5;
    std::vector<double> c1d_;
    std::vector<std::vector<cplx>> c2d_;
    std::vector<double> bound_;
    std::size_t max_modes_ = 1;  // per-k envelope of the angular coefficients (with derivative weights)
};

}  // namespace stablab
