#pragma once

namespace corrlab {

// cos(t sqrt(q2)) and sin(t sqrt(q2))/sqrt(q2), both entire in q2; the branch
// of the square root cancels.  q2 < 0 continues to cosh/sinh.
struct WaveKernelValue {
    double cos_part = 1.0;
    double sinc_part = 0.0;
};

// t >= 0.  For q2*t^2 < -700 the hyperbolic values are assembled from scaled
// exponentials instead of cosh/sinh calls, so intermediates do not overflow
// while the result is representable.
WaveKernelValue wave_kernels(double q2, double t);

// e^{-a t} * wave_kernels(q2, t) computed in combined-exponent form; stays
// finite for a >= sqrt(max(-q2, 0)), which holds for damped-wave modes where
// q2 = mu - a^2 with mu >= 0.
WaveKernelValue damped_wave_kernels(double q2, double t, double a);

}  // namespace corrlab
