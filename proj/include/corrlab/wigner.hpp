#pragma once

#include <vector>

#include "corrlab/grid.hpp"
#include "corrlab/noise.hpp"
#include "corrlab/spectral.hpp"

namespace corrlab {

// Phase-space energy density on the (x, xi) product grid; xi values are
// eps-scaled mode frequencies.  For the torus the grids are flattened
// row-major over axes.
struct PhaseSpaceDensity {
    std::vector<std::vector<double>> x_axes;   // grid per axis
    std::vector<std::vector<double>> xi_axes;  // eps * kappa per axis
    std::vector<double> values;  // [x_flat * nxi + xi_flat]
    double epsilon = 1.0;

    std::size_t nx() const;
    std::size_t nxi() const;
    double at(std::size_t x_flat, std::size_t xi_flat) const { return values[x_flat * nxi() + xi_flat]; }
    // cell measure dx * dxi
    double cell_measure() const;
    double total_mass() const;
};

// Symmetrized two-point Wigner transform of a single grid field at scale eps;
// half-point shifts realized by frequency-domain phase ramps.
// Normalized so that sum W dx dxi equals the field energy.
PhaseSpaceDensity wigner_transform(const SpectralDecomposition& dec, const Field& u, double eps);

// Averaged Wigner density over realizations and time steps (power spectrum
// estimate).  Requires >= 2 realizations and a translation-invariant domain.
PhaseSpaceDensity empirical_power_spectrum(const std::vector<SourceTrajectory>& realizations,
                                           double eps, std::size_t time_stride = 1);

}  // namespace corrlab
