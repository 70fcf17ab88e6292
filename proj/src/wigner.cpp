#include "corrlab/wigner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace corrlab {

std::size_t PhaseSpaceDensity::nx() const {
    std::size_t n = 1;
    for (const auto& a : x_axes) n *= a.size();
    return n;
}
std::size_t PhaseSpaceDensity::nxi() const {
    std::size_t n = 1;
    for (const auto& a : xi_axes) n *= a.size();
    return n;
}
double PhaseSpaceDensity::cell_measure() const {
    double m = 1.0;
    for (std::size_t a = 0; a < x_axes.size(); ++a) {
        m *= x_axes[a][1] - x_axes[a][0];
        m *= xi_axes[a][1] - xi_axes[a][0];
    }
    return m;
}
double PhaseSpaceDensity::total_mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * cell_measure();
}

namespace {

// 1D circle Wigner: W(x_j, xi_l) = (2 pi eps)^{-1} h sum_m p_m(x_j) e^{-i kappa_l m h}
// with p_m(x) = u(x + m h/2) conj(u(x - m h/2)); the half shifts are applied
// as phase ramps on the mode coefficients.
PhaseSpaceDensity wigner_circle(const SpectralDecomposition& dec, const Field& u, double eps) {
    const std::size_t n = dec.domain.size();
    const double L = dec.domain.extent[0];
    const double h = L / static_cast<double>(n);

    const auto coeff = dec.to_modes(u);
    // kappa per mode
    std::vector<double> kappa(n);
    for (std::size_t k = 0; k < n; ++k)
        kappa[k] = kTwoPi * static_cast<double>(dec.wavevectors[k][0]) / L;

    // symmetric shift index list m = 0, 1, -1, ...
    std::vector<long> shifts;
    shifts.push_back(0);
    for (long m = 1; shifts.size() < n; ++m) {
        shifts.push_back(m);
        if (shifts.size() < n) shifts.push_back(-m);
    }

    // p[m][x]
    std::vector<std::vector<cplx>> p(shifts.size(), std::vector<cplx>(n));
    std::vector<cplx> cp(n), cm(n);
    for (std::size_t im = 0; im < shifts.size(); ++im) {
        const double s = static_cast<double>(shifts[im]) * h / 2.0;
        for (std::size_t k = 0; k < n; ++k) {
            cp[k] = coeff[k] * std::exp(cplx(0.0, kappa[k] * s));
            cm[k] = coeff[k] * std::exp(cplx(0.0, -kappa[k] * s));
        }
        const Field up = dec.to_grid(cp);
        const Field um = dec.to_grid(cm);
        for (std::size_t j = 0; j < n; ++j) p[im][j] = up[j] * std::conj(um[j]);
    }

    PhaseSpaceDensity W;
    W.epsilon = eps;
    W.x_axes = {std::vector<double>(n)};
    W.xi_axes = {std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) W.x_axes[0][j] = static_cast<double>(j) * h;
    // xi grid sorted ascending for output
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return kappa[a] < kappa[b]; });
    for (std::size_t l = 0; l < n; ++l) W.xi_axes[0][l] = eps * kappa[order[l]];

    W.values.assign(n * n, 0.0);
    const double norm = h / (kTwoPi * eps);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) {
            const double kl = kappa[order[l]];
            cplx acc{0, 0};
            for (std::size_t im = 0; im < shifts.size(); ++im) {
                const double y = static_cast<double>(shifts[im]) * h;
                acc += p[im][j] * std::exp(cplx(0.0, -kl * y));
            }
            W.values[j * n + l] = norm * acc.real();
        }
    return W;
}

// 2D torus: separable product of phase ramps, frequencies (kx, ky).
PhaseSpaceDensity wigner_torus(const SpectralDecomposition& dec, const Field& u, double eps) {
    const std::size_t nx = dec.domain.modes[0], ny = dec.domain.modes[1];
    const std::size_t n = nx * ny;
    const double lx = dec.domain.extent[0], ly = dec.domain.extent[1];
    const double hx = lx / static_cast<double>(nx), hy = ly / static_cast<double>(ny);

    const auto coeff = dec.to_modes(u);
    std::vector<double> kx(n), ky(n);
    for (std::size_t k = 0; k < n; ++k) {
        kx[k] = kTwoPi * static_cast<double>(dec.wavevectors[k][0]) / lx;
        ky[k] = kTwoPi * static_cast<double>(dec.wavevectors[k][1]) / ly;
    }

    auto shift_list = [](std::size_t m) {
        std::vector<long> s{0};
        for (long v = 1; s.size() < m; ++v) {
            s.push_back(v);
            if (s.size() < m) s.push_back(-v);
        }
        return s;
    };
    const auto sx = shift_list(nx), sy = shift_list(ny);

    PhaseSpaceDensity W;
    W.epsilon = eps;
    W.x_axes = {std::vector<double>(nx), std::vector<double>(ny)};
    for (std::size_t j = 0; j < nx; ++j) W.x_axes[0][j] = static_cast<double>(j) * hx;
    for (std::size_t j = 0; j < ny; ++j) W.x_axes[1][j] = static_cast<double>(j) * hy;

    // unique sorted frequency grids per axis
    auto axis_freqs = [&](std::size_t axis, double l) {
        std::vector<double> f;
        for (std::size_t k = 0; k < n; ++k) {
            const double v = kTwoPi * static_cast<double>(dec.wavevectors[k][axis]) / l;
            if (std::find(f.begin(), f.end(), v) == f.end()) f.push_back(v);
        }
        std::sort(f.begin(), f.end());
        return f;
    };
    const auto fx = axis_freqs(0, lx), fy = axis_freqs(1, ly);
    W.xi_axes = {std::vector<double>(fx.size()), std::vector<double>(fy.size())};
    for (std::size_t i = 0; i < fx.size(); ++i) W.xi_axes[0][i] = eps * fx[i];
    for (std::size_t i = 0; i < fy.size(); ++i) W.xi_axes[1][i] = eps * fy[i];

    const std::size_t nxi = fx.size() * fy.size();
    W.values.assign(n * nxi, 0.0);
    const double norm = hx * hy / ((kTwoPi * eps) * (kTwoPi * eps));

    std::vector<cplx> cp(n), cm(n);
    for (long mx : sx)
        for (long my : sy) {
            const double shx = static_cast<double>(mx) * hx / 2.0;
            const double shy = static_cast<double>(my) * hy / 2.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double ph = kx[k] * shx + ky[k] * shy;
                cp[k] = coeff[k] * std::exp(cplx(0.0, ph));
                cm[k] = coeff[k] * std::exp(cplx(0.0, -ph));
            }
            const Field up = dec.to_grid(cp);
            const Field um = dec.to_grid(cm);
            for (std::size_t j = 0; j < n; ++j) {
                const cplx pj = up[j] * std::conj(um[j]);
                for (std::size_t ix = 0; ix < fx.size(); ++ix)
                    for (std::size_t iy = 0; iy < fy.size(); ++iy) {
                        const double phase = -(fx[ix] * static_cast<double>(mx) * hx +
                                               fy[iy] * static_cast<double>(my) * hy);
                        W.values[j * nxi + ix * fy.size() + iy] +=
                            norm * (pj * std::exp(cplx(0.0, phase))).real();
                    }
            }
        }
    return W;
}

}  // namespace

PhaseSpaceDensity wigner_transform(const SpectralDecomposition& dec, const Field& u, double eps) {
    switch (dec.domain.kind) {
        case DomainKind::circle_1d:
            return wigner_circle(dec, u, eps);
        case DomainKind::torus_2d:
            return wigner_torus(dec, u, eps);
        case DomainKind::interval_neumann_1d:
            throw std::invalid_argument("wigner_transform: domain has no translation structure");
    }
    throw std::logic_error("unreachable");
}

PhaseSpaceDensity empirical_power_spectrum(const std::vector<SourceTrajectory>& realizations,
                                           double eps, std::size_t time_stride) {
    if (realizations.size() < 2)
        throw std::invalid_argument("empirical_power_spectrum: need >= 2 realizations");
    const auto& dec = realizations.front().dec;
    if (dec.domain.kind == DomainKind::interval_neumann_1d)
        throw std::invalid_argument("empirical_power_spectrum: domain has no translation structure");

    PhaseSpaceDensity avg;
    std::size_t count = 0;
    for (const auto& r : realizations) {
        for (std::size_t t = 0; t < r.steps; t += time_stride) {
            const PhaseSpaceDensity w = wigner_transform(dec, r.grid_values(t), eps);
            if (count == 0) {
                avg = w;
            } else {
                for (std::size_t i = 0; i < avg.values.size(); ++i) avg.values[i] += w.values[i];
            }
            ++count;
        }
    }
    for (auto& v : avg.values) v /= static_cast<double>(count);
    return avg;
}

}  // namespace corrlab
