#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "corrlab/grid.hpp"
#include "corrlab/noise.hpp"
#include "corrlab/propagation.hpp"

namespace corrlab {

enum class CorrProvenance { empirical, theoretical_quadrature, closed_form };

// Lag-indexed station-pair correlation estimates.  Matrix-valued for
// multi-component trajectories: value(p, j, c1, c2) correlates component c1
// at the pair's first station with component c2 at the second.
struct CorrelationFunction {
    double lag_dt = 0.0;
    long half_lags = 0;  // lags j * lag_dt, j in [-half_lags, half_lags]
    std::vector<Station> stations;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t n_comp = 1;
    std::vector<cplx> values;
    std::vector<double> sigma;  // per-entry Monte Carlo std of the mean; empty if absent
    CorrProvenance provenance = CorrProvenance::closed_form;
    double T = 0.0;
    std::size_t realizations = 1;

    std::size_t n_lags() const { return static_cast<std::size_t>(2 * half_lags + 1); }
    std::size_t index(std::size_t p, long j, std::size_t c1 = 0, std::size_t c2 = 0) const {
        const std::size_t jl = static_cast<std::size_t>(j + half_lags);
        return ((p * n_lags() + jl) * n_comp + c1) * n_comp + c2;
    }
    cplx value(std::size_t p, long j, std::size_t c1 = 0, std::size_t c2 = 0) const {
        return values[index(p, j, c1, c2)];
    }
    double lag(long j) const { return static_cast<double>(j) * lag_dt; }

    // CSV columns: pair_id, tau, re, im, sigma (components flattened row-wise).
    void export_csv(const std::string& path) const;
};

struct EmpiricalOptions {
    std::size_t window_start = 0;   // sample index; must be past burn-in
    std::size_t window_samples = 0; // 0 = rest of trajectory
    bool all_components = false;
};

// Windowed discrete time average via fast convolution, unbiased per-lag
// normalization.  Signals window-too-short and pre-burn-in starts.
CorrelationFunction empirical_correlation(const FieldTrajectory& traj,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                          long max_lag, const EmpiricalOptions& opts = {});

// Pooled mean over realizations with per-lag sigma of the mean.
CorrelationFunction empirical_correlation_ensemble(const std::vector<FieldTrajectory>& trajs,
                                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                                   long max_lag, const EmpiricalOptions& opts = {});

struct TheoryOptions {
    bool use_quadrature = false;  // integrate the stationary operator instead of closed form
    double quadrature_tol = 1e-10;
    bool branch_resolved = false;  // two-component: resolve the two branches
};

// Stationary-correlation operator evaluated at stations: C(tau) = Omega(tau) Pi
// for tau > t0 with Pi assembled mode-pair-wise in closed form (or by
// truncated quadrature), and C(-tau) by the adjoint rule.
CorrelationFunction theoretical_correlation(const DampedWaveModel& model,
                                            const CovarianceKernel& K,
                                            const std::vector<Station>& stations,
                                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                            double lag_dt, long half_lags,
                                            const TheoryOptions& opts = {});

// Single kernel value C_{A,B}(tau).
cplx theoretical_value(const DampedWaveModel& model, const CovarianceKernel& K, const Station& A,
                       const Station& B, double tau, const TheoryOptions& opts = {});

// Station matrix C(0) for a station set (positive semidefiniteness checks).
std::vector<std::vector<cplx>> theoretical_pi_matrix(const DampedWaveModel& model,
                                                     const CovarianceKernel& K,
                                                     const std::vector<Station>& stations);

// Band-filtered scalar model with constant damping k: per-mode factor
// F_k = chi_I(nu_k) |l_k|^2 * sum_j dt Psi_j e^{k u_j} e^{+i omega_k u_j},
// C(tau) = (1/2k) F Omega(tau).  Requires tau > t0.
struct ExactScalarResult {
    std::vector<cplx> mode_factor;  // F_k
    std::vector<double> taus;
    std::vector<cplx> values;  // [pair][tau]
    cplx value(std::size_t pair, std::size_t it) const { return values[pair * taus.size() + it]; }
};
ExactScalarResult exact_scalar_formula(const DampedWaveModel& model, const NoiseSpec& spec,
                                       const std::vector<Station>& stations,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                       const std::vector<double>& taus);

// White-noise wave-equation correlation in closed form, even in tau:
// e^{-a|tau|}/(4a) [ (Q^2+a^2)^{-1} (cos tau Q + a sin|tau|Q / Q) ](A,B),
// summed over mu > 0 modes.
cplx white_noise_closed_form(const DampedWaveModel& model, double tau,
                             const std::vector<double>& A, const std::vector<double>& B);

struct DerivativeIdentityReport {
    double max_exact_residual = 0.0;  // analytic derivative vs -(1/4a) G_a
    double fd_residual_h = 0.0;
    double fd_residual_h2 = 0.0;
    double fitted_order = 0.0;
};
DerivativeIdentityReport derivative_green_identity(const DampedWaveModel& model,
                                                   const std::vector<double>& A,
                                                   const std::vector<double>& B,
                                                   const std::vector<double>& taus, double h);

struct TravelTimePick {
    double tau_star = 0.0;
    double amplitude = 0.0;
    double snr = 0.0;
    bool degenerate = false;
};
struct PickOptions {
    double band_lo = 0.0;
    double band_hi = 0.0;  // 0 = full band up to Nyquist
    double min_lag = 0.0;  // exclude |tau| below this
    bool whiten = true;
};
// Arrival pick: band-pass (optionally spectrally whitened) one-sided filter,
// derivative, envelope maximum over tau > min_lag.  snr = peak/median.
// Throws "no reliable arrival" when snr < 3; A == B is flagged degenerate.
TravelTimePick pick_travel_time(const CorrelationFunction& corr, std::size_t pair,
                                const PickOptions& opts = {});

struct ErgodicReport {
    std::vector<double> T_values;
    std::vector<double> variances;
    double slope = 0.0;
    double slope_stderr = 0.0;
    bool degenerate = false;
};
// Variance of C_T(tau*, A, B) across realizations, regressed against T on
// log-log axes.
ErgodicReport ergodic_convergence(const DampedWaveModel& model, const NoiseSpec& spec,
                                  const std::vector<double>& T_values, std::size_t realizations,
                                  double dt, const Station& A, const Station& B, double tau_star,
                                  std::size_t record_stride = 1);

struct CrossBranchOptions {
    bool empirical = false;
    std::size_t realizations = 8;
    double T = 200.0;
    double dt = 1e-3;
    double lag_dt = 0.05;
    long half_lags = 60;
};
struct CrossBranchResult {
    double ratio = 0.0;        // max |C^{+-}| / max |C^{++}| over tau > 0
    double ratio_sigma = 0.0;  // across realizations (empirical mode)
    CorrelationFunction corr;  // branch-resolved
};
// Branch-resolved correlation through the exact branch decomposition; the
// noise window must vanish on a neighborhood of B of radius >= 4 eps,
// resolved by the grid.
CrossBranchResult cross_branch_correlation(const BranchSystem& branches, const NoiseSpec& spec,
                                           const Station& A, const Station& B,
                                           const CrossBranchOptions& opts = {});

}  // namespace corrlab
