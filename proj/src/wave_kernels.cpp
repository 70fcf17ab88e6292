#include "corrlab/wave_kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace corrlab {

namespace {

// Power series around q2 = 0:  cos -> sum (-q2)^n t^{2n}/(2n)!,
// sinc -> t * sum (-q2)^n t^{2n}/(2n+1)!.  Used where |q2| t^2 is small so a
// handful of terms reaches machine precision without cancellation.
WaveKernelValue series(double q2, double t) {
    const double z = -q2 * t * t;
    double term_c = 1.0, term_s = 1.0;
    double c = 1.0, s = 1.0;
    for (int n = 1; n <= 24; ++n) {
        term_c *= z / ((2.0 * n - 1.0) * (2.0 * n));
        term_s *= z / ((2.0 * n) * (2.0 * n + 1.0));
        c += term_c;
        s += term_s;
        if (std::abs(term_c) < 1e-18 * std::abs(c) && std::abs(term_s) < 1e-18 * std::abs(s)) break;
    }
    return {c, t * s};
}

}  // namespace

WaveKernelValue wave_kernels(double q2, double t) {
    if (t < 0.0) throw std::invalid_argument("wave_kernels: t must be >= 0");
    const double z = q2 * t * t;
    if (std::abs(z) < 1e-3) return series(q2, t);
    if (q2 > 0.0) {
        const double q = std::sqrt(q2);
        return {std::cos(q * t), std::sin(q * t) / q};
    }
    const double s = std::sqrt(-q2);
    const double x = s * t;
    if (z < -700.0) {
        // cosh x = e^x (1 + e^{-2x}) / 2 assembled from one growing exponential
        const double ex = std::exp(x);
        const double em = std::exp(-2.0 * x);
        return {0.5 * ex * (1.0 + em), 0.5 * ex * (1.0 - em) / s};
    }
    return {std::cosh(x), std::sinh(x) / s};
}

WaveKernelValue damped_wave_kernels(double q2, double t, double a) {
    if (t < 0.0) throw std::invalid_argument("damped_wave_kernels: t must be >= 0");
    const double z = q2 * t * t;
    if (q2 > 0.0 || std::abs(z) < 1e-3) {
        const WaveKernelValue k = wave_kernels(q2, t);
        const double d = std::exp(-a * t);
        return {d * k.cos_part, d * k.sinc_part};
    }
    // e^{-at} cosh(st) = (e^{(s-a)t} + e^{-(s+a)t})/2, finite for a >= s.
    const double s = std::sqrt(-q2);
    const double ep = std::exp((s - a) * t);
    const double em = std::exp(-(s + a) * t);
    return {0.5 * (ep + em), 0.5 * (ep - em) / s};
}

}  // namespace corrlab
