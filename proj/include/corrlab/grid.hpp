#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace corrlab {

using cplx = std::complex<double>;
using Field = std::vector<cplx>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Weighted inner product <a,b> = sum_i w * conj(a_i) b_i with uniform cell
// weight w.  Conjugation on the first argument.
inline cplx inner(const Field& a, const Field& b, double cell) {
    cplx s{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s * cell;
}

inline double norm2(const Field& a, double cell) {
    double s = 0.0;
    for (const auto& v : a) s += std::norm(v);
    return s * cell;
}

}  // namespace corrlab
