#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "grid.hpp"

namespace stablab {

using cplx = std::complex<double>;
using CField = std::vector<cplx>;

namespace detail {

// FFTW's planner is not re-entrant; execution with new-array calls is.
inline fftw_plan cached_plan(int dim, std::size_t n, int sign) {
    static std::mutex mu;
    static std::map<std::tuple<int, std::size_t, int>, fftw_plan> plans;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(dim, n, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    const std::size_t total = dim == 1 ? n : n * n;
    auto* buf = fftw_alloc_complex(total);
    fftw_plan p = dim == 1
        ? fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED)
        : fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), buf, buf, sign,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    plans.emplace(key, p);
    return p;
}

}  // namespace detail

/// In-place unnormalized transform; sign = FFTW_FORWARD (e^{-2 pi i jk/N}) or FFTW_BACKWARD.
inline void fft_inplace(const GridSpec& g, CField& a, int sign) {
    auto* ptr = reinterpret_cast<fftw_complex*>(a.data());
    fftw_execute_dft(detail::cached_plan(g.dim, g.n, sign), ptr, ptr);
}

inline CField to_spectrum(const GridSpec& g, const GridFunction& f) {
    CField a(f.begin(), f.end());
    fft_inplace(g, a, FFTW_FORWARD);
    return a;
}

/// Frequency vector of spectral index idx.
inline Point frequency_of(const GridSpec& g, std::size_t idx) {
    if (g.dim == 1) return {g.frequency(idx), 0.0};
    return {g.frequency(idx / g.n), g.frequency(idx % g.n)};
}

/// Evaluate a multiplier at spectral index idx. On the Nyquist line the +/- frequencies
/// are averaged so that real, even-symmetric input stays real after inversion.
template <class M>
cplx symmetrized_multiplier(const GridSpec& g, std::size_t idx, M&& m) {
    Point lam = frequency_of(g, idx);
    const double nyq = -g.nyquist();
    const bool ny0 = lam[0] == nyq;
    const bool ny1 = g.dim == 2 && lam[1] == nyq;
    if (!ny0 && !ny1) return m(lam);
    cplx acc = 0;
    int cnt = 0;
    for (int s0 : {1, -1}) {
        if (!ny0 && s0 < 0) continue;
        for (int s1 : {1, -1}) {
            if (!ny1 && s1 < 0) continue;
            acc += m(Point{lam[0] * s0, lam[1] * s1});
            ++cnt;
        }
    }
    return acc / static_cast<double>(cnt);
}

/// Real part of IFFT(m(lambda) * spectrum) / N^d.
template <class M>
GridFunction apply_multiplier(const GridSpec& g, const CField& spec, M&& m) {
    CField a(spec.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = spec[i] * symmetrized_multiplier(g, i, m);
    fft_inplace(g, a, FFTW_BACKWARD);
    GridFunction out(a.size());
    const double inv = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real() * inv;
    return out;
}

template <class M>
GridFunction apply_multiplier(const GridSpec& g, const GridFunction& f, M&& m) {
    return apply_multiplier(g, to_spectrum(g, f), std::forward<M>(m));
}

/// Spectral partial derivative along axis a (periodic extension).
inline GridFunction spectral_derivative(const GridSpec& g, const CField& spec, int axis) {
    return apply_multiplier(g, spec, [axis](const Point& l) { return cplx(0, l[axis]); });
}

inline GridFunction spectral_second_derivative(const GridSpec& g, const CField& spec, int a, int b) {
    return apply_multiplier(g, spec, [a, b](const Point& l) { return cplx(-l[a] * l[b], 0); });
}

/// Exact evaluation of the trigonometric interpolant of a periodic grid function at x.
inline double trig_eval(const GridSpec& g, const CField& spec, const Point& x) {
    cplx acc = 0;
    const double y0 = x[0] + g.half_extent, y1 = x[1] + g.half_extent;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        acc += spec[i] * symmetrized_multiplier(g, i, [&](const Point& l) {
            return std::polar(1.0, l[0] * y0 + (g.dim == 2 ? l[1] * y1 : 0.0));
        });
    }
    return acc.real() / static_cast<double>(spec.size());
}

}  // namespace stablab
