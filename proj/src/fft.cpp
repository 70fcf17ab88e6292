#include "corrlab/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace corrlab {

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft_pow2(std::vector<cplx>& x, int sign) {
    const std::size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft_pow2: size must be a power of two");

    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * kTwoPi / static_cast<double>(len);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = x[i + k];
                const cplx v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

std::vector<cplx> lag_correlation(const std::vector<cplx>& a, const std::vector<cplx>& b,
                                  std::size_t max_lag) {
    const std::size_t n = a.size();
    if (b.size() != n) throw std::invalid_argument("lag_correlation: length mismatch");
    if (n == 0) return {};
    const std::size_t m = next_pow2(n + max_lag + 1);

    std::vector<cplx> fa(m, cplx{0.0, 0.0}), fb(m, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) fa[i] = a[i];
    for (std::size_t i = 0; i < n; ++i) fb[i] = b[i];
    fft_pow2(fa, -1);
    fft_pow2(fb, -1);
    for (std::size_t i = 0; i < m; ++i) fa[i] *= std::conj(fb[i]);
    fft_pow2(fa, +1);
    const double inv = 1.0 / static_cast<double>(m);

    std::vector<cplx> out(2 * max_lag + 1);
    for (std::size_t j = 0; j <= max_lag; ++j) {
        out[max_lag + j] = fa[j] * inv;                    // positive lags
        if (j > 0) out[max_lag - j] = fa[m - j] * inv;     // negative lags
    }
    return out;
}

}  // namespace corrlab
