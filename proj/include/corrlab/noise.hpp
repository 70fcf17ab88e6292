#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "corrlab/grid.hpp"
#include "corrlab/spectral.hpp"

namespace corrlab {

// Closed frequency interval for the spectral band projector, or "all".
struct BandInterval {
    bool all = true;
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return all || (v >= lo && v <= hi); }
    static BandInterval everything() { return {}; }
    static BandInterval closed(double lo, double hi) { return {false, lo, hi}; }
};

// Recipe for a stationary filtered-noise source: band projector, temporal tap
// filter, mode multiplier, optional spatial window, semiclassical scale, seed.
struct NoiseSpec {
    DiscreteDomain domain;
    BandInterval band;
    std::vector<double> band_dispersion;  // per-mode value tested against band; default sqrt(mu)
    std::vector<double> taps = {1.0};     // temporal filter values at spacing tap_dt, centered at 0
    double tap_dt = 1.0;
    std::vector<double> mode_multiplier;  // |l|(xi_k) per mode; empty means 1
    std::vector<double> spatial_window;   // w(x) on the grid; empty means 1
    double epsilon = 1.0;
    std::uint64_t seed = 0;
    bool real_noise = false;

    // Tap j sits at time (j - (n-1)/2) * tap_dt.  Support width bound.
    double support_t0() const { return static_cast<double>(taps.size()) * tap_dt; }

    std::string to_json() const;
    static NoiseSpec from_json(const std::string& text, const SpectralDecomposition& dec);
};

// Evaluate a multiplier symbol l(xi) at xi_k = epsilon * kappa_k (1D) or
// l(|xi|) at |xi_k| (any dimension).
std::vector<double> make_mode_multiplier(const SpectralDecomposition& dec, double epsilon,
                                         const std::function<double(double)>& l_of_xi);
std::vector<double> make_mode_multiplier_radial(const SpectralDecomposition& dec, double epsilon,
                                                const std::function<double(double)>& l_of_absxi);
// Default band test values sqrt(mu_k).
std::vector<double> default_band_dispersion(const SpectralDecomposition& dec);

// Realized discrete-time random forcing, stored as mode coefficients per step.
struct SourceTrajectory {
    double dt = 0.0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::uint64_t realization_index = 0;
    SpectralDecomposition dec;
    std::vector<std::vector<cplx>> mode_values;  // [step][mode]

    Field grid_values(std::size_t step) const { return dec.to_grid(mode_values.at(step)); }

    // Raw binary dump of the mode table plus a JSON sidecar manifest.
    void export_binary(const std::string& path_bin, const std::string& path_manifest) const;
};

// Covariance kernel K(t) = Psi(t) x (band/multiplier operator), Psi the
// tap autocorrelation Psi_j = dt * sum_m taps[m+j] taps[m].
struct CovarianceKernel {
    double lag_dt = 0.0;
    long half_lags = 0;
    std::vector<double> psi;  // index half_lags + j for lag j*lag_dt
    std::vector<double> mode_weight;       // diagonal multiplier chi_I |l|^2 per mode
    std::vector<std::vector<cplx>> dense;  // windowed case: full mode-space matrix; empty if diagonal
    double support_t0 = 0.0;

    double psi_at(long j) const {
        if (j < -half_lags || j > half_lags) return 0.0;
        return psi[static_cast<std::size_t>(j + half_lags)];
    }
};

// Per-entry iid Gaussian grid noise with variance 1/(dt*cell_volume),
// realized in mode space (unitarily equivalent), deterministic per
// (seed, realization_index).
SourceTrajectory sample_white_noise(const SpectralDecomposition& dec, double dt,
                                    std::size_t steps, std::uint64_t seed,
                                    std::uint64_t realization_index = 0, bool real_noise = false);

// Band projection, zero-padded temporal tap convolution, mode multiplier,
// then spatial window.  Rejects tap sequences longer than the trajectory.
SourceTrajectory apply_filters(const SourceTrajectory& w, const NoiseSpec& spec);

CovarianceKernel covariance_kernel(const NoiseSpec& spec, const SpectralDecomposition& dec);

// Streaming source: mode coefficients per step without materializing the
// trajectory.  The filtered stream reproduces
// apply_filters(sample_white_noise(...), spec) bit for bit.
class SourceStream {
  public:
    virtual ~SourceStream() = default;
    virtual void next(std::vector<cplx>& out) = 0;
    virtual std::size_t n_modes() const = 0;
};

std::unique_ptr<SourceStream> make_white_noise_stream(const SpectralDecomposition& dec, double dt,
                                                      std::uint64_t seed,
                                                      std::uint64_t realization_index,
                                                      bool real_noise);
std::unique_ptr<SourceStream> make_filtered_stream(const SpectralDecomposition& dec,
                                                   const NoiseSpec& spec, double dt,
                                                   std::uint64_t realization_index);
std::unique_ptr<SourceStream> make_materialized_stream(const SourceTrajectory& src);

}  // namespace corrlab
