#include "corrlab/waveguide.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

#include "corrlab/grid.hpp"
#include "json.hpp"

namespace corrlab {

double VelocityProfile::N0(double x, int samples) const {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= samples; ++i) {
        const double Z = Z0 * static_cast<double>(i) / samples;
        m = std::min(m, N(x, Z));
    }
    return m;
}

void VelocityProfile::validate(double x) const {
    if (N_inf <= 0.0) throw std::invalid_argument("profile: N_inf must be > 0");
    if (Z0 >= 0.0) throw std::invalid_argument("profile: Z0 must be < 0");
    for (int i = 0; i <= 64; ++i) {
        const double Z = Z0 * (1.0 + static_cast<double>(i) / 16.0);
        if (std::abs(N(x, Z) - N_inf) > 1e-12 * N_inf)
            throw std::invalid_argument("profile: N must equal N_inf below Z0");
    }
    const double n0 = N0(x, 512);
    if (n0 <= 0.0) throw std::invalid_argument("profile: N must be positive");
}

VelocityProfile VelocityProfile::square_well(double n0, double n_inf, double z0) {
    VelocityProfile p;
    p.N_inf = n_inf;
    p.Z0 = z0;
    p.N = [n0, n_inf, z0](double, double Z) { return Z > z0 ? n0 : n_inf; };
    return p;
}

VelocityProfile VelocityProfile::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    VelocityProfile p;
    p.N_inf = j.at("N_inf").get<double>();
    p.Z0 = j.at("Z0").get<double>();

    struct StationKnots {
        double x;
        std::vector<std::pair<double, double>> knots;  // (Z, N) ascending in Z
    };
    auto stations = std::make_shared<std::vector<StationKnots>>();
    for (const auto& st : j.at("stations")) {
        StationKnots s;
        s.x = st.at("x").get<double>();
        for (const auto& kn : st.at("knots"))
            s.knots.emplace_back(kn.at(0).get<double>(), kn.at(1).get<double>());
        std::sort(s.knots.begin(), s.knots.end());
        stations->push_back(s);
    }
    std::sort(stations->begin(), stations->end(),
              [](const StationKnots& a, const StationKnots& b) { return a.x < b.x; });
    if (stations->empty()) throw std::invalid_argument("profile: no stations");

    const double n_inf = p.N_inf, z0 = p.Z0;
    p.N = [stations, n_inf, z0](double x, double Z) {
        if (Z <= z0) return n_inf;
        auto eval_station = [&](const StationKnots& s) {
            const auto& kn = s.knots;
            if (Z <= kn.front().first) return kn.front().second;
            if (Z >= kn.back().first) return kn.back().second;
            for (std::size_t i = 1; i < kn.size(); ++i)
                if (Z <= kn[i].first) {
                    const double t = (Z - kn[i - 1].first) / (kn[i].first - kn[i - 1].first);
                    return kn[i - 1].second + t * (kn[i].second - kn[i - 1].second);
                }
            return kn.back().second;
        };
        const auto& sts = *stations;
        if (x <= sts.front().x || sts.size() == 1) return eval_station(sts.front());
        if (x >= sts.back().x) return eval_station(sts.back());
        for (std::size_t i = 1; i < sts.size(); ++i)
            if (x <= sts[i].x) {
                const double t = (x - sts[i - 1].x) / (sts[i].x - sts[i - 1].x);
                return (1.0 - t) * eval_station(sts[i - 1]) + t * eval_station(sts[i]);
            }
        return eval_station(sts.back());
    };
    return p;
}

namespace {

// Symmetric tridiagonal operator in the weighted coordinates u = W^{1/2} v.
struct Tridiag {
    std::vector<double> diag;
    std::vector<double> off;  // off[i] couples i and i+1
};

// Nodes z_i = Z_bot + i h, i = 1..M; Dirichlet at z_0 = Z_bot (eliminated),
// Neumann at z_M = 0 via a half control volume.
Tridiag assemble(const VelocityProfile& p, double x, double xi, double Z_bot, std::size_t nodes,
                 double* h_out, std::vector<double>* z_out) {
    if (nodes < 200) throw std::invalid_argument("sturm_liouville_eigs: nodes >= 200 required");
    if (Z_bot >= p.Z0) throw std::invalid_argument("sturm_liouville_eigs: Z_bot must lie below Z0");
    const std::size_t M = nodes;
    const double h = -Z_bot / static_cast<double>(M);
    *h_out = h;
    z_out->resize(M);
    for (std::size_t i = 1; i <= M; ++i) (*z_out)[i - 1] = Z_bot + static_cast<double>(i) * h;

    // face coefficients at interval midpoints
    std::vector<double> Nf(M + 1);
    for (std::size_t i = 0; i <= M; ++i) {
        const double zm = Z_bot + (static_cast<double>(i) + 0.5) * h;
        Nf[i] = p.N(x, std::min(zm, 0.0));
    }
    // potential coefficient: control-volume average of N (two half-cell
    // midpoints), so node-aligned material jumps keep second order
    auto n_cell = [&](double zi, bool half_cell) {
        if (half_cell) return 0.5 * (p.N(x, zi - 3.0 * h / 8.0) + p.N(x, zi - h / 8.0));
        return 0.5 * (p.N(x, zi - h / 4.0) + p.N(x, zi + h / 4.0));
    };

    Tridiag T;
    T.diag.resize(M);
    T.off.resize(M - 1);
    const double xi2 = xi * xi;
    for (std::size_t i = 1; i < M; ++i) {
        const double zi = Z_bot + static_cast<double>(i) * h;
        T.diag[i - 1] = (Nf[i - 1] + Nf[i]) / (h * h) + n_cell(zi, false) * xi2;
    }
    // Neumann end: half cell, zero flux through the surface
    T.diag[M - 1] = 2.0 * Nf[M - 1] / (h * h) + n_cell(0.0, true) * xi2;
    for (std::size_t i = 1; i < M - 1; ++i) T.off[i - 1] = -Nf[i] / (h * h);
    T.off[M - 2] = -std::sqrt(2.0) * Nf[M - 1] / (h * h);
    return T;
}

// Number of eigenvalues strictly below lambda (Sturm sequence / LDL^T signs).
std::size_t count_below(const Tridiag& T, double lambda) {
    const std::size_t n = T.diag.size();
    std::size_t count = 0;
    double d = T.diag[0] - lambda;
    if (d < 0.0) ++count;
    for (std::size_t i = 1; i < n; ++i) {
        const double e = T.off[i - 1];
        double denom = d;
        if (denom == 0.0) denom = 1e-300;
        d = (T.diag[i] - lambda) - e * e / denom;
        if (d < 0.0) ++count;
    }
    return count;
}

double bisect_eigenvalue(const Tridiag& T, std::size_t index, double lo, double hi) {
    // smallest lambda with count_below(lambda) >= index+1
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (count_below(T, mid) >= index + 1)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

// Inverse iteration with the shifted tridiagonal (Thomas solve with partial
// pivoting is unnecessary for these well-conditioned shifts).
std::vector<double> inverse_iteration(const Tridiag& T, double lambda) {
    const std::size_t n = T.diag.size();
    std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    const double shift = lambda * (1.0 + 1e-11) + 1e-13;
    for (int iter = 0; iter < 6; ++iter) {
        // solve (T - shift I) w = v via LU on tridiagonal
        std::vector<double> dd(n), ee(n - 1), w(v);
        for (std::size_t i = 0; i < n; ++i) dd[i] = T.diag[i] - shift;
        ee = T.off;
        for (std::size_t i = 1; i < n; ++i) {
            const double m = ee[i - 1] / dd[i - 1];
            dd[i] -= m * ee[i - 1];
            w[i] -= m * w[i - 1];
        }
        w[n - 1] /= dd[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) w[i] = (w[i] - T.off[i] * w[i + 1]) / dd[i];
        double nrm = 0.0;
        for (double c : w) nrm += c * c;
        nrm = std::sqrt(nrm);
        for (auto& c : w) c /= nrm;
        v = w;
    }
    return v;
}

}  // namespace

std::vector<double> sturm_weights(double Z_bot, std::size_t nodes) {
    const double h = -Z_bot / static_cast<double>(nodes);
    std::vector<double> w(nodes, h);
    w[nodes - 1] = h / 2.0;
    return w;
}

std::vector<double> sturm_apply(const VelocityProfile& profile, double x, double xi, double Z_bot,
                                std::size_t nodes, const std::vector<double>& v) {
    double h = 0.0;
    std::vector<double> z;
    const Tridiag T = assemble(profile, x, xi, Z_bot, nodes, &h, &z);
    const std::size_t M = T.diag.size();
    if (v.size() != M) throw std::invalid_argument("sturm_apply: size mismatch");
    // operator in function coordinates:  W^{-1/2} B W^{1/2} v
    const auto w = sturm_weights(Z_bot, nodes);
    std::vector<double> u(M), out(M);
    for (std::size_t i = 0; i < M; ++i) u[i] = v[i] * std::sqrt(w[i]);
    for (std::size_t i = 0; i < M; ++i) {
        double s = T.diag[i] * u[i];
        if (i > 0) s += T.off[i - 1] * u[i - 1];
        if (i + 1 < M) s += T.off[i] * u[i + 1];
        out[i] = s / std::sqrt(w[i]);
    }
    return out;
}

SturmEigs sturm_liouville_eigs(const VelocityProfile& profile, double x, double xi, double Z_bot,
                               std::size_t nodes, const SturmOptions& opts) {
    profile.validate(x);
    SturmEigs out;
    const Tridiag T = assemble(profile, x, xi, Z_bot, nodes, &out.h, &out.z);
    out.threshold = profile.N_inf * xi * xi * (1.0 - opts.threshold_margin);

    const double lo_bound = profile.N0(x) * xi * xi * 0.5;  // safe lower bracket
    const std::size_t n_below = count_below(T, out.threshold);
    if (n_below == 0) throw std::runtime_error("no trapped modes");

    const std::size_t M = T.diag.size();
    for (std::size_t idx = 0; idx < n_below; ++idx) {
        const double lam = bisect_eigenvalue(T, idx, lo_bound, out.threshold);
        std::vector<double> u = inverse_iteration(T, lam);
        // back to function values: v = W^{-1/2} u, weights h (interior), h/2 (top)
        std::vector<double> v(M);
        for (std::size_t i = 0; i < M; ++i) {
            const double w = (i == M - 1) ? out.h / 2.0 : out.h;
            v[i] = u[i] / std::sqrt(w);
        }
        // normalize in the discrete inner product (already unit from u, keep sign)
        if (v[M - 1] < 0.0)
            for (auto& c : v) c = -c;
        // decay guard: mass in the bottom tenth
        double bottom = 0.0, total = 0.0;
        const std::size_t tenth = M / 10;
        for (std::size_t i = 0; i < M; ++i) {
            const double w = (i == M - 1) ? out.h / 2.0 : out.h;
            total += w * v[i] * v[i];
            if (i < tenth) bottom += w * v[i] * v[i];
        }
        if (bottom / total > opts.decay_guard) {
            if (opts.discard_unresolved) continue;
            throw std::runtime_error("insufficient decay margin: deepen Z_bot");
        }
        out.lambda.push_back(lam);
        out.modes.push_back(std::move(v));
    }
    if (out.lambda.empty()) throw std::runtime_error("no trapped modes");
    return out;
}

namespace {

double overlap(const std::vector<double>& a, const std::vector<double>& b, double h,
               std::size_t M) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double w = (i == M - 1) ? h / 2.0 : h;
        s += w * a[i] * b[i];
    }
    return std::abs(s);
}

double hellmann_feynman_group_velocity(const VelocityProfile& p, double x, double xi,
                                       const std::vector<double>& mode,
                                       const std::vector<double>& z, double h, double lambda) {
    // d lambda / d xi = 2 xi <N v, v>;  d omega / d xi = (d lambda/d xi)/(2 sqrt(lambda))
    double s = 0.0;
    const std::size_t M = mode.size();
    for (std::size_t i = 0; i < M; ++i) {
        const double w = (i == M - 1) ? h / 2.0 : h;
        s += w * p.N(x, z[i]) * mode[i] * mode[i];
    }
    const double dlam = 2.0 * xi * s;
    return dlam / (2.0 * std::sqrt(lambda));
}

}  // namespace

DispersionTable dispersion_table(const VelocityProfile& profile, double x,
                                 const std::vector<double>& xi_grid, double Z_bot,
                                 std::size_t nodes, const SturmOptions& opts) {
    for (std::size_t i = 1; i < xi_grid.size(); ++i)
        if (xi_grid[i] <= xi_grid[i - 1] || xi_grid[0] <= 0.0)
            throw std::invalid_argument("dispersion_table: xi grid must be positive ascending");

    DispersionTable tab;
    tab.x = x;
    tab.xi = xi_grid;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::vector<double>> prev_modes;
    std::vector<std::size_t> prev_branch;  // branch id per previous eigenvector
    double h = 0.0;
    std::size_t M = 0;

    SturmOptions sweep_opts = opts;
    sweep_opts.discard_unresolved = true;
    for (std::size_t ix = 0; ix < xi_grid.size(); ++ix) {
        SturmEigs eig;
        try {
            eig = sturm_liouville_eigs(profile, x, xi_grid[ix], Z_bot, nodes, sweep_opts);
        } catch (const std::runtime_error& e) {
            if (std::string(e.what()) != "no trapped modes") throw;
            tab.mode_count.push_back(0);
            prev_modes.clear();
            prev_branch.clear();
            continue;
        }
        h = eig.h;
        M = eig.modes.empty() ? 0 : eig.modes.front().size();
        tab.mode_count.push_back(eig.lambda.size());

        std::vector<std::size_t> branch_of(eig.lambda.size());
        for (std::size_t m = 0; m < eig.lambda.size(); ++m) {
            // continuation by polarization overlap with the previous column
            std::size_t best = SIZE_MAX;
            double best_ov = 0.8;
            for (std::size_t pm = 0; pm < prev_modes.size(); ++pm) {
                const double ov = overlap(eig.modes[m], prev_modes[pm], h, M);
                if (ov > best_ov) {
                    best_ov = ov;
                    best = pm;
                }
            }
            std::size_t branch;
            if (best != SIZE_MAX) {
                branch = prev_branch[best];
            } else {
                branch = tab.lambda.size();
                tab.lambda.emplace_back(xi_grid.size(), nan);
                tab.omega.emplace_back(xi_grid.size(), nan);
                tab.group_velocity.emplace_back(xi_grid.size(), nan);
                tab.branch_born_inside.push_back(ix != 0);
            }
            branch_of[m] = branch;
            tab.lambda[branch][ix] = eig.lambda[m];
            tab.omega[branch][ix] = std::sqrt(eig.lambda[m]);
            tab.group_velocity[branch][ix] = hellmann_feynman_group_velocity(
                profile, x, xi_grid[ix], eig.modes[m], eig.z, h, eig.lambda[m]);
        }
        prev_modes = std::move(eig.modes);
        prev_branch = branch_of;
    }
    return tab;
}

void DispersionTable::export_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "# x,xi,branch,lambda,omega,group_velocity\n";
    f.precision(15);
    for (std::size_t b = 0; b < lambda.size(); ++b)
        for (std::size_t i = 0; i < xi.size(); ++i) {
            if (std::isnan(lambda[b][i])) continue;
            f << x << "," << xi[i] << "," << b << "," << lambda[b][i] << "," << omega[b][i] << ","
              << group_velocity[b][i] << "\n";
        }
}

namespace {

// natural cubic spline second derivatives
std::vector<double> spline_d2(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    std::vector<double> d2(n, 0.0), u(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
        const double p = sig * d2[i - 1] + 2.0;
        d2[i] = (sig - 1.0) / p;
        u[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]) - (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        u[i] = (6.0 * u[i] / (xs[i + 1] - xs[i - 1]) - sig * u[i - 1]) / p;
    }
    for (std::size_t i = n - 1; i-- > 0;) d2[i] = d2[i] * d2[i + 1] + u[i];
    return d2;
}

struct SplineEval {
    double y, dy, d2y;
};
SplineEval spline_eval(const std::vector<double>& xs, const std::vector<double>& ys,
                       const std::vector<double>& d2, double x) {
    std::size_t lo = 0, hi = xs.size() - 1;
    if (x <= xs.front()) hi = 1;
    else if (x >= xs.back()) lo = xs.size() - 2;
    else {
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (xs[mid] > x) hi = mid;
            else lo = mid;
        }
    }
    const double hstep = xs[hi] - xs[lo];
    const double a = (xs[hi] - x) / hstep, b = (x - xs[lo]) / hstep;
    SplineEval e;
    e.y = a * ys[lo] + b * ys[hi] +
          ((a * a * a - a) * d2[lo] + (b * b * b - b) * d2[hi]) * hstep * hstep / 6.0;
    e.dy = (ys[hi] - ys[lo]) / hstep +
           (-(3.0 * a * a - 1.0) * d2[lo] + (3.0 * b * b - 1.0) * d2[hi]) * hstep / 6.0;
    e.d2y = a * d2[lo] + b * d2[hi];
    return e;
}

}  // namespace

double TabulatedHamiltonian::value(double x, double xi) const {
    if (x_grid.size() == 1) return spline_eval(xi_grid, H[0], d2[0], xi).y;
    std::size_t lo = 0;
    while (lo + 2 < x_grid.size() && x_grid[lo + 1] < x) ++lo;
    const double t = std::clamp((x - x_grid[lo]) / (x_grid[lo + 1] - x_grid[lo]), 0.0, 1.0);
    const double a = spline_eval(xi_grid, H[lo], d2[lo], xi).y;
    const double b = spline_eval(xi_grid, H[lo + 1], d2[lo + 1], xi).y;
    return (1.0 - t) * a + t * b;
}

double TabulatedHamiltonian::dx(double x, double xi) const {
    if (x_grid.size() == 1) return 0.0;
    std::size_t lo = 0;
    while (lo + 2 < x_grid.size() && x_grid[lo + 1] < x) ++lo;
    const double a = spline_eval(xi_grid, H[lo], d2[lo], xi).y;
    const double b = spline_eval(xi_grid, H[lo + 1], d2[lo + 1], xi).y;
    return (b - a) / (x_grid[lo + 1] - x_grid[lo]);
}

double TabulatedHamiltonian::dxi(double x, double xi) const {
    if (x_grid.size() == 1) return spline_eval(xi_grid, H[0], d2[0], xi).dy;
    std::size_t lo = 0;
    while (lo + 2 < x_grid.size() && x_grid[lo + 1] < x) ++lo;
    const double t = std::clamp((x - x_grid[lo]) / (x_grid[lo + 1] - x_grid[lo]), 0.0, 1.0);
    const double a = spline_eval(xi_grid, H[lo], d2[lo], xi).dy;
    const double b = spline_eval(xi_grid, H[lo + 1], d2[lo + 1], xi).dy;
    return (1.0 - t) * a + t * b;
}

double TabulatedHamiltonian::dxixi(double x, double xi) const {
    if (x_grid.size() == 1) return spline_eval(xi_grid, H[0], d2[0], xi).d2y;
    std::size_t lo = 0;
    while (lo + 2 < x_grid.size() && x_grid[lo + 1] < x) ++lo;
    const double t = std::clamp((x - x_grid[lo]) / (x_grid[lo + 1] - x_grid[lo]), 0.0, 1.0);
    const double a = spline_eval(xi_grid, H[lo], d2[lo], xi).d2y;
    const double b = spline_eval(xi_grid, H[lo + 1], d2[lo + 1], xi).d2y;
    return (1.0 - t) * a + t * b;
}

TabulatedHamiltonian effective_hamiltonian_export(const VelocityProfile& profile,
                                                  const std::vector<double>& x_grid,
                                                  const std::vector<double>& xi_grid,
                                                  std::size_t branch, double Z_bot,
                                                  std::size_t nodes, const SturmOptions& opts) {
    TabulatedHamiltonian tab;
    tab.x_grid = x_grid;
    tab.xi_grid = xi_grid;
    for (double x : x_grid) {
        const DispersionTable dt = dispersion_table(profile, x, xi_grid, Z_bot, nodes, opts);
        if (branch >= dt.lambda.size())
            throw std::runtime_error("effective_hamiltonian_export: branch missing at x");
        std::vector<double> row(xi_grid.size());
        for (std::size_t i = 0; i < xi_grid.size(); ++i) {
            if (std::isnan(dt.lambda[branch][i]))
                throw std::runtime_error("effective_hamiltonian_export: hole in branch");
            row[i] = dt.omega[branch][i];
        }
        tab.H.push_back(row);
        tab.d2.push_back(spline_d2(xi_grid, row));
    }
    return tab;
}

std::vector<double> square_well_oracle(double n0, double n_inf, double z0, double xi, double tol) {
    // roots of  n0 p tan(p l) = n_inf kappa  with l = |z0|,
    // p = sqrt(lambda/n0 - xi^2) in (0, p_max), kappa = sqrt(xi^2 - lambda/n_inf)
    const double l = -z0;
    const double p_max = std::sqrt(std::max(0.0, xi * xi * (n_inf / n0 - 1.0)));
    auto lambda_of_p = [&](double p) { return n0 * (p * p + xi * xi); };
    auto g = [&](double p) {
        const double lam = lambda_of_p(p);
        const double kap = std::sqrt(std::max(0.0, xi * xi - lam / n_inf));
        return n0 * p * std::tan(p * l) - n_inf * kap;
    };
    std::vector<double> roots;
    // scan tan branches: p l in ((j-1/2)pi, (j+1/2)pi)
    const int jmax = static_cast<int>(std::floor(p_max * l / kPi + 0.5));
    for (int j = 0; j <= jmax; ++j) {
        double lo = (j == 0) ? 1e-12 : (static_cast<double>(j) - 0.5) * kPi / l + 1e-10;
        double hi = std::min((static_cast<double>(j) + 0.5) * kPi / l - 1e-10, p_max - 1e-12);
        if (hi <= lo) continue;
        // g goes from negative (or small) to +inf across each branch; bracket a
        // sign change by sampling
        const int ns = 400;
        double prev_p = lo, prev_g = g(lo);
        for (int i = 1; i <= ns; ++i) {
            const double p = lo + (hi - lo) * static_cast<double>(i) / ns;
            const double gp = g(p);
            if (std::isfinite(prev_g) && std::isfinite(gp) && prev_g * gp < 0.0) {
                double a = prev_p, b = p;
                for (int it = 0; it < 200 && b - a > tol; ++it) {
                    const double m = 0.5 * (a + b);
                    if (g(a) * g(m) <= 0.0)
                        b = m;
                    else
                        a = m;
                }
                roots.push_back(lambda_of_p(0.5 * (a + b)));
            }
            prev_p = p;
            prev_g = gp;
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

}  // namespace corrlab
