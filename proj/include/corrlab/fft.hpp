#pragma once

#include <cstddef>
#include <vector>

#include "corrlab/grid.hpp"

namespace corrlab {

// In-place radix-2 FFT, size must be a power of two.
// sign = -1: forward sum_n x_n e^{-2pi i nk/N}; sign = +1: unnormalized inverse.
void fft_pow2(std::vector<cplx>& x, int sign);

std::size_t next_pow2(std::size_t n);

// Forward DFT of arbitrary-length input by zero-padding is NOT a DFT of the
// original sequence; these helpers are for linear convolution/correlation
// where zero padding is exact.

// Lag sums  c_j = sum_n a_n conj(b_{n-j})  for j in [-max_lag, +max_lag],
// indices kept inside [0, N); returned c has size 2*max_lag+1, c[max_lag+j]=c_j.
// Implemented by zero-padded FFT (exact linear correlation).
std::vector<cplx> lag_correlation(const std::vector<cplx>& a, const std::vector<cplx>& b,
                                  std::size_t max_lag);

}  // namespace corrlab
