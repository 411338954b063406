#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "quadrature.hpp"

namespace stablab {

/// Density theta(1,u) of the one-sided stable law with Laplace transform exp(-s^rho), 0 < rho < 1.
/// Below u = 1 the value comes from a log-grid table of the Zolotarev integral,
/// above it from the convergent large-u series.
class SubordinatorDensity {
public:
    explicit SubordinatorDensity(double rho) : rho_(rho) {
        require(rho > 0 && rho < 1, "subordinator: index must lie in (0,1)");
        kappa_ = rho / (1 - rho);
        a0_ = (1 - rho) * std::pow(rho, kappa_);
        // below lo the density is smaller than exp(-200)
        lo_ = -std::log(200.0 / a0_) / kappa_;
        du_ = -lo_ / (kTable - 1);
        logf_.resize(kTable);
        for (std::size_t i = 0; i < kTable; ++i) logf_[i] = log_integral(lo_ + du_ * static_cast<double>(i));
    }

    double rho() const { return rho_; }

    /// Smallest log u still carrying mass (theta < e^-200 below).
    double log_lower() const { return lo_; }

    double log_density(double u) const {
        if (u <= 0) return -INFINITY;
        const double l = std::log(u);
        if (l < 0) {
            if (l < lo_) return log_integral(l);
            return interp_uniform(logf_, lo_, du_, l);
        }
        return std::log(series(u));
    }

    double density(double u) const { return u <= 0 ? 0.0 : std::exp(log_density(u)); }

    /// Mass beyond V, from the same series integrated termwise (valid for V >= 1).
    double tail_mass(double V) const {
        double s = 0;
        for (int k = 1; k <= 200; ++k) {
            const double env = std::exp(std::lgamma(k * rho_ + 1) - std::lgamma(k + 1.0) - k * rho_ * std::log(V)) /
                               (k * rho_) / M_PI;
            s += std::pow(-1.0, k + 1) * std::sin(M_PI * k * rho_) * env;
            if (k > 4 && env < 1e-17 * std::abs(s)) break;
        }
        return s;
    }

    /// Kanter's representation S = (a(U)/E)^{(1-rho)/rho}, U uniform on (0, pi), E standard exponential.
    template <class Rng>
    double sample(Rng& rng) const {
        std::uniform_real_distribution<double> U(0.0, M_PI);
        std::exponential_distribution<double> E(1.0);
        double phi = U(rng);
        while (phi <= 0) phi = U(rng);
        return std::pow(a(phi) / E(rng), 1 / kappa_);
    }

    /// One shared instance per index.
    static std::shared_ptr<const SubordinatorDensity> get(double rho) {
        static std::mutex mu;
        static std::map<double, std::shared_ptr<const SubordinatorDensity>> cache;
        std::lock_guard<std::mutex> lock(mu);
        auto& slot = cache[rho];
        if (!slot) slot = std::make_shared<SubordinatorDensity>(rho);
        return slot;
    }

private:
    static constexpr std::size_t kTable = 2049;

    double a(double phi) const {
        return std::sin((1 - rho_) * phi) * std::pow(std::sin(rho_ * phi), kappa_) /
               std::pow(std::sin(phi), 1 / (1 - rho_));
    }

    // log of the Zolotarev integral at log u = l, with exp(-a0 X) factored out
    double log_integral(double l) const {
        const double X = std::exp(-kappa_ * l);
        auto f = [&](double phi) {
            if (phi <= 0) return a0_;
            if (phi >= M_PI) return 0.0;
            const double v = a(phi);
            return v * std::exp(-(v - a0_) * X);
        };
        const double I = adaptive(f, 0.0, M_PI, 1e-12);
        return std::log(kappa_ / M_PI) - l / (1 - rho_) - a0_ * X + std::log(I);
    }

    double series(double u) const {
        double s = 0;
        const double lu = std::log(u);
        for (int k = 1; k <= 200; ++k) {
            const double env = std::exp(std::lgamma(k * rho_ + 1) - std::lgamma(k + 1.0) - (k * rho_ + 1) * lu) / M_PI;
            s += std::pow(-1.0, k + 1) * std::sin(M_PI * k * rho_) * env;
            if (k > 4 && env < 1e-17 * std::abs(s)) break;
        }
        return s;
    }

    double rho_, kappa_, a0_, lo_, du_;
    std::vector<double> logf_;
};

}  // namespace stablab
