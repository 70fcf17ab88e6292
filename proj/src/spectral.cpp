#include "corrlab/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace corrlab {

std::vector<double> DiscreteDomain::point(std::size_t flat) const {
    std::vector<double> x(axes());
    for (std::size_t a = axes(); a-- > 0;) {
        const std::size_t n = modes[a];
        const std::size_t i = flat % n;
        flat /= n;
        const double h = extent[a] / static_cast<double>(n);
        if (kind == DomainKind::interval_neumann_1d)
            x[a] = (static_cast<double>(i) + 0.5) * h;  // midpoint grid
        else
            x[a] = static_cast<double>(i) * h;
    }
    return x;
}

DiscreteDomain DiscreteDomain::circle(std::size_t n_modes, double circumference) {
    if (n_modes < 2) throw std::invalid_argument("circle: need at least 2 modes");
    if (circumference <= 0.0) throw std::invalid_argument("circle: zero-size domain");
    DiscreteDomain d;
    d.kind = DomainKind::circle_1d;
    d.extent = {circumference};
    d.modes = {n_modes};
    d.cell_volume = circumference / static_cast<double>(n_modes);
    return d;
}

DiscreteDomain DiscreteDomain::torus(std::size_t nx, std::size_t ny, double lx, double ly) {
    if (nx < 2 || ny < 2) throw std::invalid_argument("torus: need at least 2 modes per axis");
    if (lx <= 0.0 || ly <= 0.0) throw std::invalid_argument("torus: zero-size domain");
    DiscreteDomain d;
    d.kind = DomainKind::torus_2d;
    d.extent = {lx, ly};
    d.modes = {nx, ny};
    d.cell_volume = (lx / nx) * (ly / ny);
    return d;
}

DiscreteDomain DiscreteDomain::interval_neumann(std::size_t n_modes, double length) {
    if (n_modes < 2) throw std::invalid_argument("interval: need at least 2 modes");
    if (length <= 0.0) throw std::invalid_argument("interval: zero-size domain");
    DiscreteDomain d;
    d.kind = DomainKind::interval_neumann_1d;
    d.extent = {length};
    d.modes = {n_modes};
    d.cell_volume = length / static_cast<double>(n_modes);
    return d;
}

namespace {

// Symmetric mode ladder 0, +1, -1, +2, -2, ... truncated to n entries.
std::vector<long> symmetric_wavenumbers(std::size_t n) {
    std::vector<long> k;
    k.reserve(n);
    k.push_back(0);
    for (long j = 1; k.size() < n; ++j) {
        k.push_back(j);
        if (k.size() < n) k.push_back(-j);
    }
    return k;
}

}  // namespace

cplx SpectralDecomposition::basis_value(std::size_t k, const std::vector<double>& x) const {
    if (!fourier_multiplier)
        throw std::logic_error("basis_value: dense basis has no off-grid evaluation");
    switch (domain.kind) {
        case DomainKind::circle_1d: {
            const double L = domain.extent[0];
            const double kappa = kTwoPi * static_cast<double>(wavevectors[k][0]) / L;
            const double s = 1.0 / std::sqrt(L);
            return cplx(s * std::cos(kappa * x[0]), s * std::sin(kappa * x[0]));
        }
        case DomainKind::torus_2d: {
            const double lx = domain.extent[0], ly = domain.extent[1];
            const double kx = kTwoPi * static_cast<double>(wavevectors[k][0]) / lx;
            const double ky = kTwoPi * static_cast<double>(wavevectors[k][1]) / ly;
            const double s = 1.0 / std::sqrt(lx * ly);
            const double ph = kx * x[0] + ky * x[1];
            return cplx(s * std::cos(ph), s * std::sin(ph));
        }
        case DomainKind::interval_neumann_1d: {
            const double L = domain.extent[0];
            const long m = wavevectors[k][0];
            if (m == 0) return cplx(1.0 / std::sqrt(L), 0.0);
            const double s = std::sqrt(2.0 / L);
            return cplx(s * std::cos(static_cast<double>(m) * kPi * x[0] / L), 0.0);
        }
    }
    return {};
}

std::vector<cplx> SpectralDecomposition::to_modes(const Field& u) const {
    const std::size_t n = domain.size();
    if (u.size() != n) throw std::invalid_argument("to_modes: field size mismatch");
    std::vector<cplx> c(n_modes(), cplx{0.0, 0.0});
    if (fourier_multiplier) {
        for (std::size_t k = 0; k < n_modes(); ++k) {
            cplx s{0.0, 0.0};
            for (std::size_t j = 0; j < n; ++j) s += std::conj(basis_value(k, domain.point(j))) * u[j];
            c[k] = s * domain.cell_volume;
        }
    } else {
        for (std::size_t k = 0; k < n_modes(); ++k) {
            cplx s{0.0, 0.0};
            for (std::size_t j = 0; j < n; ++j) s += std::conj(vectors[k][j]) * u[j];
            c[k] = s * domain.cell_volume;
        }
    }
    return c;
}

Field SpectralDecomposition::to_grid(const std::vector<cplx>& coeff) const {
    if (coeff.size() != n_modes()) throw std::invalid_argument("to_grid: coefficient size mismatch");
    const std::size_t n = domain.size();
    Field u(n, cplx{0.0, 0.0});
    if (fourier_multiplier) {
        for (std::size_t k = 0; k < n_modes(); ++k) {
            if (coeff[k] == cplx{0.0, 0.0}) continue;
            for (std::size_t j = 0; j < n; ++j) u[j] += coeff[k] * basis_value(k, domain.point(j));
        }
    } else {
        for (std::size_t k = 0; k < n_modes(); ++k) {
            if (coeff[k] == cplx{0.0, 0.0}) continue;
            for (std::size_t j = 0; j < n; ++j) u[j] += coeff[k] * vectors[k][j];
        }
    }
    return u;
}

SpectralDecomposition build_laplacian(const DiscreteDomain& domain) {
    if (domain.modes.empty() || domain.cell_volume <= 0.0)
        throw std::invalid_argument("build_laplacian: zero-size domain");
    for (auto m : domain.modes)
        if (m < 2) throw std::invalid_argument("build_laplacian: need >= 2 modes per axis");
    SpectralDecomposition dec;
    dec.domain = domain;
    dec.fourier_multiplier = true;

    struct Mode {
        double mu;
        std::vector<long> kv;
    };
    std::vector<Mode> table;

    switch (domain.kind) {
        case DomainKind::circle_1d: {
            const double L = domain.extent[0];
            for (long k : symmetric_wavenumbers(domain.modes[0])) {
                const double kappa = kTwoPi * static_cast<double>(k) / L;
                table.push_back({kappa * kappa, {k}});
            }
            break;
        }
        case DomainKind::torus_2d: {
            const double lx = domain.extent[0], ly = domain.extent[1];
            for (long kx : symmetric_wavenumbers(domain.modes[0]))
                for (long ky : symmetric_wavenumbers(domain.modes[1])) {
                    const double ax = kTwoPi * static_cast<double>(kx) / lx;
                    const double ay = kTwoPi * static_cast<double>(ky) / ly;
                    table.push_back({ax * ax + ay * ay, {kx, ky}});
                }
            break;
        }
        case DomainKind::interval_neumann_1d: {
            const double L = domain.extent[0];
            for (std::size_t m = 0; m < domain.modes[0]; ++m) {
                const double kappa = static_cast<double>(m) * kPi / L;
                table.push_back({kappa * kappa, {static_cast<long>(m)}});
            }
            break;
        }
    }

    std::stable_sort(table.begin(), table.end(), [](const Mode& a, const Mode& b) {
        if (a.mu != b.mu) return a.mu < b.mu;
        return a.kv < b.kv;
    });
    for (auto& m : table) {
        dec.eigenvalues.push_back(m.mu);
        dec.wavevectors.push_back(m.kv);
    }
    return dec;
}

SpectralDecomposition build_dense_decomposition(const DiscreteDomain& domain,
                                                const std::vector<Field>& op_columns) {
    const std::size_t n = domain.size();
    if (n > 4096) throw std::invalid_argument("dense decomposition capped at 4096 modes");
    if (op_columns.size() != n) throw std::invalid_argument("operator matrix size mismatch");

    Eigen::MatrixXcd A(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        if (op_columns[j].size() != n) throw std::invalid_argument("operator column size mismatch");
        for (std::size_t i = 0; i < n; ++i) A(i, j) = op_columns[j][i];
    }
    const double asym = (A - A.adjoint()).norm();
    if (asym > 1e-10 * std::max(1.0, A.norm()))
        throw std::invalid_argument("dense decomposition: operator not Hermitian");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
    if (es.info() != Eigen::Success) throw std::runtime_error("dense eigensolve failed");

    SpectralDecomposition dec;
    dec.domain = domain;
    dec.fourier_multiplier = false;
    const double w = 1.0 / std::sqrt(domain.cell_volume);
    dec.eigenvalues.resize(n);
    dec.vectors.assign(n, Field(n));
    for (std::size_t k = 0; k < n; ++k) {
        dec.eigenvalues[k] = es.eigenvalues()(k);
        for (std::size_t i = 0; i < n; ++i) dec.vectors[k][i] = es.eigenvectors()(i, k) * w;
    }
    return dec;
}

Field apply_operator_function(const SpectralDecomposition& dec,
                              const std::function<cplx(double)>& f, const Field& u) {
    auto coeff = dec.to_modes(u);
    for (std::size_t k = 0; k < coeff.size(); ++k) {
        const cplx fv = f(dec.eigenvalues[k]);
        if (!std::isfinite(fv.real()) || !std::isfinite(fv.imag()))
            throw std::domain_error("apply_operator_function: non-finite value on the spectrum");
        coeff[k] *= fv;
    }
    return dec.to_grid(coeff);
}

}  // namespace corrlab
