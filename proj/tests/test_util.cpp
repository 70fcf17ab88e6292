#include <cmath>
#include <complex>
#include <vector>

#include "corrlab/fft.hpp"
#include "corrlab/quadrature.hpp"
#include "corrlab/rng.hpp"
#include "corrlab/wave_kernels.hpp"
#include "doctest.h"

using namespace corrlab;

namespace {

// quadratic-time DFT oracle
std::vector<cplx> naive_dft(const std::vector<cplx>& x, int sign) {
    const std::size_t n = x.size();
    std::vector<cplx> out(n, cplx{0, 0});
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j)
            out[k] += x[j] * std::exp(cplx(0.0, sign * kTwoPi * double(j) * double(k) / double(n)));
    return out;
}

// power series for cosh/sinh summed to machine precision
double cosh_series(double x) {
    double term = 1.0, s = 1.0;
    for (int n = 1; n < 60; ++n) {
        term *= x * x / ((2.0 * n - 1.0) * (2.0 * n));
        s += term;
        if (term < 1e-18 * s) break;
    }
    return s;
}
double sinh_series(double x) {
    double term = x, s = x;
    for (int n = 1; n < 60; ++n) {
        term *= x * x / ((2.0 * n) * (2.0 * n + 1.0));
        s += term;
        if (term < 1e-18 * s) break;
    }
    return s;
}

}  // namespace

TEST_CASE("counter rng: determinism and stream independence") {
    CounterRng a(42, 0), b(42, 0), c(42, 1);
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
        CHECK(va != c.next_u64());
    }
}

TEST_CASE("counter rng: gaussian moments") {
    CounterRng r(7, 3);
    const int n = 200000;
    double m1 = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
        const double g = r.gaussian();
        m1 += g;
        m2 += g * g;
    }
    m1 /= n;
    m2 /= n;
    CHECK(std::abs(m1) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(m2 - 1.0) < 6.0 / std::sqrt(double(n)));
}

TEST_CASE("fft matches the naive DFT") {
    std::vector<cplx> x;
    CounterRng r(5, 0);
    for (int i = 0; i < 64; ++i) x.push_back(r.gaussian_complex());
    auto ref = naive_dft(x, -1);
    auto y = x;
    fft_pow2(y, -1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-10);

    fft_pow2(y, +1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] / 64.0 - x[i]) < 1e-12);
}

TEST_CASE("lag_correlation equals the direct windowed sums") {
    CounterRng r(11, 0);
    std::vector<cplx> a, b;
    for (int i = 0; i < 37; ++i) {
        a.push_back(r.gaussian_complex());
        b.push_back(r.gaussian_complex());
    }
    const std::size_t L = 9;
    const auto fast = lag_correlation(a, b, L);
    for (long j = -long(L); j <= long(L); ++j) {
        cplx direct{0, 0};
        for (long n = 0; n < 37; ++n) {
            const long m = n - j;
            if (m < 0 || m >= 37) continue;
            direct += a[std::size_t(n)] * std::conj(b[std::size_t(m)]);
        }
        CHECK(std::abs(fast[std::size_t(j + long(L))] - direct) < 1e-10);
    }
}

TEST_CASE("wave kernels: trivial and trig values") {
    const auto k0 = wave_kernels(0.0, 3.0);
    CHECK(k0.cos_part == doctest::Approx(1.0));
    CHECK(k0.sinc_part == doctest::Approx(3.0));

    const auto k1 = wave_kernels(1.0, kPi / 2.0);
    CHECK(std::abs(k1.cos_part) < 1e-15);
    CHECK(k1.sinc_part == doctest::Approx(1.0));
}

TEST_CASE("wave kernels: hyperbolic branch against the series oracle") {
    const auto k = wave_kernels(-1.0, 1.0);
    CHECK(k.cos_part == doctest::Approx(cosh_series(1.0)).epsilon(1e-14));
    CHECK(k.sinc_part == doctest::Approx(sinh_series(1.0)).epsilon(1e-14));
    // magnitude sanity of the quoted values
    CHECK(k.cos_part == doctest::Approx(1.5430806348).epsilon(1e-9));
    CHECK(k.sinc_part == doctest::Approx(1.1752011936).epsilon(1e-9));
}

TEST_CASE("wave kernels: entire across q2 = 0") {
    const double t = 2.3;
    const auto below = wave_kernels(-1e-9, t);
    const auto above = wave_kernels(1e-9, t);
    CHECK(std::abs(below.cos_part - above.cos_part) < 1e-8);
    CHECK(std::abs(below.sinc_part - above.sinc_part) < 1e-8);
}

TEST_CASE("wave kernels: scaled exponential branch stays finite and consistent") {
    // q2 t^2 < -700 engages the scaled-exponential assembly
    const double q2 = -9.0, t = 10.0;  // q2 t^2 = -900
    const auto k = wave_kernels(q2, t);
    CHECK(std::isfinite(k.cos_part));
    CHECK(k.cos_part == doctest::Approx(std::cosh(30.0)).epsilon(1e-12));
    CHECK(k.sinc_part == doctest::Approx(std::sinh(30.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("damped kernels fold the envelope without overflow") {
    // raw cosh would overflow at x ~ 800; the damped form is tame
    const double mu = 1e-6;
    const double a = 2.0;
    const double t = 500.0;
    const auto k = damped_wave_kernels(mu - a * a, t, a);
    CHECK(std::isfinite(k.cos_part));
    CHECK(std::isfinite(k.sinc_part));
    // e^{-at} cosh(st) ~ 0.5 e^{-(a-s)t} with s = sqrt(a^2-mu) slightly below a
    const double s = std::sqrt(a * a - mu);
    CHECK(k.cos_part == doctest::Approx(0.5 * std::exp((s - a) * t)).epsilon(1e-9));
}

TEST_CASE("wave kernels satisfy the oscillator equation (central differences)") {
    const double dt = 1e-4;
    for (double q2 : {4.0, 0.7, -2.0}) {
        for (double t : {0.5, 1.7}) {
            const double c0 = wave_kernels(q2, t - dt).cos_part;
            const double c1 = wave_kernels(q2, t).cos_part;
            const double c2 = wave_kernels(q2, t + dt).cos_part;
            const double dd = (c2 - 2 * c1 + c0) / (dt * dt);
            CHECK(std::abs(dd + q2 * c1) < 1e-6 * std::max(1.0, std::abs(q2 * c1)));
        }
    }
}

TEST_CASE("adaptive simpson integrates a damped oscillation") {
    bool conv = true;
    const double got = adaptive_simpson([](double t) { return std::exp(-t) * std::cos(5.0 * t); },
                                        0.0, 10.0, 1e-12, &conv);
    const double want = (1.0 - std::exp(-10.0) * (std::cos(50.0) - 5 * std::sin(50.0))) / 26.0;
    CHECK(conv);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
}
