#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace corrlab {

namespace detail {

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth, bool& converged) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth <= 0) {
        converged = false;
        return left + right + delta / 15.0;
    }
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, converged) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, converged);
}

}  // namespace detail

// Adaptive Simpson quadrature with absolute tolerance.  `converged` reports
// whether the recursion depth sufficed everywhere.
template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol, bool* converged_out = nullptr,
                        int max_depth = 40) {
    if (!(b >= a)) throw std::invalid_argument("adaptive_simpson: b < a");
    bool converged = true;
    if (a == b) {
        if (converged_out) *converged_out = true;
        return 0.0;
    }
    // Seed with a few panels so oscillatory integrands are not missed.
    const int panels = 8;
    double total = 0.0;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double pa = a + p * h, pb = pa + h, pm = 0.5 * (pa + pb);
        const double fa = f(pa), fm = f(pm), fb = f(pb);
        const double whole = (pb - pa) / 6.0 * (fa + 4.0 * fm + fb);
        total += detail::adaptive_simpson_rec(f, pa, pb, fa, fm, fb, whole, tol / panels, max_depth,
                                              converged);
    }
    if (converged_out) *converged_out = converged;
    return total;
}

}  // namespace corrlab
