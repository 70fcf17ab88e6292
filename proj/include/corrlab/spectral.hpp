#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "corrlab/grid.hpp"

namespace corrlab {

enum class DomainKind { circle_1d, torus_2d, interval_neumann_1d };

// Uniform discrete domain.  Grid count equals mode count per axis; the
// quadrature weight is one uniform cell volume.
struct DiscreteDomain {
    DomainKind kind = DomainKind::circle_1d;
    std::vector<double> extent;      // physical length per axis
    std::vector<std::size_t> modes;  // modes (= grid points) per axis
    double cell_volume = 0.0;

    std::size_t size() const {
        std::size_t n = 1;
        for (auto m : modes) n *= m;
        return n;
    }
    std::size_t axes() const { return modes.size(); }

    // Grid coordinate of flattened index (row-major over axes).
    std::vector<double> point(std::size_t flat) const;

    static DiscreteDomain circle(std::size_t n_modes, double circumference = kTwoPi);
    static DiscreteDomain torus(std::size_t nx, std::size_t ny, double lx = kTwoPi,
                                double ly = kTwoPi);
    // Interval [0, L] with Neumann ends, cosine modes on the midpoint grid.
    static DiscreteDomain interval_neumann(std::size_t n_modes, double length = kPi);
};

// Spectral decomposition of -Laplace (or a generic self-adjoint operator).
// Multiplier basis: modes carry integer wave vectors and closed-form
// eigenfunctions.  Dense basis: explicit orthonormal eigenvector matrix.
struct SpectralDecomposition {
    DiscreteDomain domain;
    std::vector<double> eigenvalues;            // ascending with multiplicity
    bool fourier_multiplier = true;             // closed-form basis
    std::vector<std::vector<long>> wavevectors; // per mode, per axis (multiplier basis)
    // Dense basis: column k of `vectors` is eigenvector k on the grid,
    // orthonormal w.r.t. the cell-weighted inner product.
    std::vector<Field> vectors;

    std::size_t n_modes() const { return eigenvalues.size(); }

    // Eigenfunction value e_k(x) at a physical point.
    cplx basis_value(std::size_t k, const std::vector<double>& x) const;

    // Mode coefficients <e_k, u> of a grid function.
    std::vector<cplx> to_modes(const Field& u) const;
    // Grid synthesis sum_k c_k e_k(x_j).
    Field to_grid(const std::vector<cplx>& coeff) const;
};

// Exact continuum symbols: circle (2 pi k / L)^2, torus |kappa|^2, Neumann
// interval (m pi / L)^2.  Modes sorted by eigenvalue.
SpectralDecomposition build_laplacian(const DiscreteDomain& domain);

// Dense decomposition of a Hermitian operator given as a matrix acting on
// grid values (self-adjoint w.r.t. the cell-weighted inner product).
// Capped at 4096 modes.
SpectralDecomposition build_dense_decomposition(const DiscreteDomain& domain,
                                                const std::vector<Field>& op_columns);

// Functional calculus: sum_k f(mu_k) <e_k,u> e_k.  Rejects f that produces
// non-finite values on the spectrum.
Field apply_operator_function(const SpectralDecomposition& dec,
                              const std::function<cplx(double)>& f, const Field& u);

}  // namespace corrlab
