#include "corrlab/ray.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

#include "corrlab/grid.hpp"
#include "corrlab/quadrature.hpp"

namespace corrlab {

HamiltonianField HamiltonianField::free_particle(double k_damp, double period) {
    HamiltonianField f;
    f.H = [](double, double xi) { return xi * xi; };
    f.Hx = [](double, double) { return 0.0; };
    f.Hxi = [](double, double xi) { return 2.0 * xi; };
    f.Hxx = [](double, double) { return 0.0; };
    f.Hxxi = [](double, double) { return 0.0; };
    f.Hxixi = [](double, double) { return 2.0; };
    f.h1 = [k_damp](double, double) { return -k_damp; };
    f.k_floor = k_damp;
    f.x_periodic = true;
    f.x_period = period;
    f.xi_min = -1e6;
    f.xi_max = 1e6;
    return f;
}

HamiltonianField HamiltonianField::harmonic(double k_damp) {
    HamiltonianField f;
    f.H = [](double x, double xi) { return xi * xi + x * x; };
    f.Hx = [](double x, double) { return 2.0 * x; };
    f.Hxi = [](double, double xi) { return 2.0 * xi; };
    f.Hxx = [](double, double) { return 2.0; };
    f.Hxxi = [](double, double) { return 0.0; };
    f.Hxixi = [](double, double) { return 2.0; };
    f.h1 = [k_damp](double, double) { return -k_damp; };
    f.k_floor = k_damp;
    f.x_min = -1e6;
    f.x_max = 1e6;
    f.xi_min = -1e6;
    f.xi_max = 1e6;
    return f;
}

HamiltonianField HamiltonianField::pendulum_well(double depth, double k_damp) {
    HamiltonianField f;
    f.H = [depth](double x, double xi) { return xi * xi - depth * std::cos(x); };
    f.Hx = [depth](double x, double) { return depth * std::sin(x); };
    f.Hxi = [](double, double xi) { return 2.0 * xi; };
    f.Hxx = [depth](double x, double) { return depth * std::cos(x); };
    f.Hxxi = [](double, double) { return 0.0; };
    f.Hxixi = [](double, double) { return 2.0; };
    f.h1 = [k_damp](double, double) { return -k_damp; };
    f.k_floor = k_damp;
    f.x_periodic = true;
    f.x_period = kTwoPi;
    f.xi_min = -1e6;
    f.xi_max = 1e6;
    return f;
}

HamiltonianField HamiltonianField::from_table(const TabulatedHamiltonian& tab, double k_damp) {
    HamiltonianField f;
    f.H = [tab](double x, double xi) { return tab.value(x, xi); };
    f.Hx = [tab](double x, double xi) { return tab.dx(x, xi); };
    f.Hxi = [tab](double x, double xi) { return tab.dxi(x, xi); };
    f.Hxx = [](double, double) { return 0.0; };  // linear blend in x
    f.Hxxi = [tab](double x, double xi) {
        const double d = 1e-6 * std::max(1.0, std::abs(x));
        return (tab.dxi(x + d, xi) - tab.dxi(x - d, xi)) / (2.0 * d);
    };
    f.Hxixi = [tab](double x, double xi) { return tab.dxixi(x, xi); };
    f.h1 = [k_damp](double, double) { return -k_damp; };
    f.k_floor = k_damp;
    f.x_min = tab.x_grid.front();
    f.x_max = tab.x_grid.back();
    f.xi_min = tab.xi_grid.front();
    f.xi_max = tab.xi_grid.back();
    if (tab.x_grid.size() == 1) {
        f.x_min = -1e30;
        f.x_max = 1e30;
    }
    return f;
}

namespace {

// State layout: x, xi, S, D, M11, M12, M21, M22.
using State = std::array<double, 8>;

State rhs(const HamiltonianField& f, const State& y, double dir) {
    const double x = y[0], xi = y[1];
    const double hxi = f.Hxi(x, xi), hx = f.Hx(x, xi);
    const double hxx = f.Hxx(x, xi), hxxi = f.Hxxi(x, xi), hxixi = f.Hxixi(x, xi);
    State d;
    d[0] = dir * hxi;
    d[1] = dir * (-hx);
    d[2] = dir * (xi * hxi - f.H(x, xi));  // action integrand
    d[3] = f.h1(x, xi);                    // damping accumulates in flow order
    // variational flow: A = [[Hxxi, Hxixi], [-Hxx, -Hxxi]]
    const double a11 = dir * hxxi, a12 = dir * hxixi, a21 = dir * (-hxx), a22 = dir * (-hxxi);
    d[4] = a11 * y[4] + a12 * y[6];
    d[5] = a11 * y[5] + a12 * y[7];
    d[6] = a21 * y[4] + a22 * y[6];
    d[7] = a21 * y[5] + a22 * y[7];
    return d;
}

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

RayTrajectory integrate_flow(const HamiltonianField& field, double x0, double xi0, double t_end,
                             double tol, bool backward) {
    if (tol < 1e-12 || tol > 1e-4) throw std::invalid_argument("integrate_flow: tol in [1e-12, 1e-4]");
    if (t_end < 0.0) throw std::invalid_argument("integrate_flow: t_end must be >= 0");
    if (!field.in_bounds(x0, xi0)) throw std::invalid_argument("integrate_flow: start out of bounds");
    const double dir = backward ? -1.0 : 1.0;

    RayTrajectory tr;
    State y{x0, xi0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0};
    double t = 0.0;
    const double E0 = field.H(x0, xi0);
    const double escale = std::max(1.0, std::abs(E0));
    double h = std::min(1e-2, t_end > 0 ? t_end : 1e-2);

    auto push = [&]() {
        tr.t.push_back(t);
        tr.x.push_back(y[0]);
        tr.xi.push_back(y[1]);
        tr.S.push_back(y[2]);
        tr.D.push_back(y[3]);
        tr.mono.push_back({y[4], y[5], y[6], y[7]});
    };
    push();
    if (t_end == 0.0) return tr;

    State k1 = rhs(field, y, dir);
    std::size_t rejections = 0;
    while (t < t_end) {
        if (h > t_end - t) h = t_end - t;
        State y2, y3, y4, y5, y6, y7;
        auto stage = [&](const State& base, std::initializer_list<std::pair<const State*, double>> terms) {
            State out = base;
            for (const auto& [kv, cc] : terms)
                for (int i = 0; i < 8; ++i) out[i] += h * cc * (*kv)[i];
            return out;
        };
        y2 = stage(y, {{&k1, a21}});
        const State k2 = rhs(field, y2, dir);
        y3 = stage(y, {{&k1, a31}, {&k2, a32}});
        const State k3 = rhs(field, y3, dir);
        y4 = stage(y, {{&k1, a41}, {&k2, a42}, {&k3, a43}});
        const State k4 = rhs(field, y4, dir);
        y5 = stage(y, {{&k1, a51}, {&k2, a52}, {&k3, a53}, {&k4, a54}});
        const State k5 = rhs(field, y5, dir);
        y6 = stage(y, {{&k1, a61}, {&k2, a62}, {&k3, a63}, {&k4, a64}, {&k5, a65}});
        const State k6 = rhs(field, y6, dir);
        y7 = stage(y, {{&k1, b1}, {&k3, b3}, {&k4, b4}, {&k5, b5}, {&k6, b6}});
        const State k7 = rhs(field, y7, dir);

        double err = 0.0;
        for (int i = 0; i < 8; ++i) {
            const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                                  e7 * k7[i]);
            const double sc = std::max({1.0, std::abs(y[i]), std::abs(y7[i])});
            err = std::max(err, std::abs(e) / sc);
        }
        const double drift = std::abs(field.H(y7[0], y7[1]) - E0) / escale;
        const bool energy_ok = drift <= std::max(tol, tr.energy_drift + tol);

        if (err <= tol && energy_ok) {
            t += h;
            y = y7;
            k1 = k7;
            tr.energy_drift = std::max(tr.energy_drift, drift);
            push();
            if (!field.in_bounds(y[0], y[1])) {
                tr.exited = true;
                throw std::runtime_error("integrate_flow: trajectory left the domain");
            }
            rejections = 0;
            const double fac = 0.9 * std::pow(tol / std::max(err, 1e-16), 0.2);
            h *= std::clamp(fac, 0.2, 5.0);
        } else {
            ++rejections;
            if (rejections > 60 || h < 1e-15)
                throw std::runtime_error("integrate_flow: step-size underflow near singular field");
            if (err > tol) {
                const double fac = 0.9 * std::pow(tol / err, 0.2);
                h *= std::clamp(fac, 0.1, 0.9);
            } else {
                h *= 0.5;  // energy-driven rejection
            }
        }
    }
    return tr;
}

void RayTrajectory::export_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "# t,x,xi,S,D\n";
    f.precision(15);
    for (std::size_t i = 0; i < t.size(); ++i)
        f << t[i] << "," << x[i] << "," << xi[i] << "," << S[i] << "," << D[i] << "\n";
}

std::vector<TwoPointRay> action_two_point(const HamiltonianField& field, double y, double x,
                                          double t, double xi_lo, double xi_hi, double shooting_tol,
                                          int scan_points) {
    if (t <= 0.0) throw std::invalid_argument("action_two_point: t must be > 0");

    // residual against every admissible target image
    auto targets = [&]() {
        std::vector<double> ts{x};
        if (field.x_periodic) {
            // winding images reachable with xi in the box
            const double reach = std::max(std::abs(xi_lo), std::abs(xi_hi)) * t *
                                     std::max(1.0, std::abs(field.Hxi(y, xi_hi)) /
                                                       std::max(1e-12, std::abs(xi_hi))) +
                                 field.x_period;
            const long mmax = static_cast<long>(std::ceil(reach / field.x_period)) + 1;
            for (long m = 1; m <= mmax; ++m) {
                ts.push_back(x + field.x_period * static_cast<double>(m));
                ts.push_back(x - field.x_period * static_cast<double>(m));
            }
        }
        return ts;
    }();

    std::vector<TwoPointRay> found;
    auto endpoint = [&](double xi0) {
        return integrate_flow(field, y, xi0, t, 1e-11, false);
    };

    std::vector<std::pair<double, double>> scan;  // (xi0, x_end)
    for (int i = 0; i <= scan_points; ++i) {
        const double xi0 = xi_lo + (xi_hi - xi_lo) * static_cast<double>(i) / scan_points;
        try {
            scan.emplace_back(xi0, endpoint(xi0).x_end());
        } catch (const std::runtime_error&) {
            // domain exit: skip this shoot
        }
    }

    auto accept = [&](double xi0) {
        RayTrajectory ray = endpoint(xi0);
        TwoPointRay sol;
        sol.xi0 = xi0;
        sol.action = ray.S.back();
        const auto& M = ray.mono_end();
        double scale = 0.0;
        for (double mv : M) scale = std::max(scale, std::abs(mv));
        sol.conjugate = std::abs(M[1]) < 1e-6 * std::max(1.0, scale);
        sol.ray = std::move(ray);
        for (const auto& f2 : found)
            if (std::abs(f2.xi0 - sol.xi0) < 1e-7 * std::max(1.0, std::abs(sol.xi0))) return;
        found.push_back(std::move(sol));
    };

    const double xscale = std::max({1.0, std::abs(x), std::abs(y)});
    for (double target : targets) {
        // endpoints already on target (degenerate/conjugate families included)
        for (const auto& [xi0, xe] : scan)
            if (std::abs(xe - target) < std::max(shooting_tol, 1e-9 * xscale)) accept(xi0);
        for (std::size_t i = 1; i < scan.size(); ++i) {
            const double r0 = scan[i - 1].second - target;
            const double r1 = scan[i].second - target;
            if (r0 == 0.0 || r0 * r1 > 0.0) continue;
            // secant/bisection hybrid on xi0
            double a = scan[i - 1].first, b = scan[i].first, fa = r0, fb = r1;
            double xim = a;
            for (int it = 0; it < 80; ++it) {
                xim = (std::abs(fb - fa) > 1e-30) ? b - fb * (b - a) / (fb - fa) : 0.5 * (a + b);
                if (xim <= std::min(a, b) || xim >= std::max(a, b)) xim = 0.5 * (a + b);
                const double fm = endpoint(xim).x_end() - target;
                if (std::abs(fm) < shooting_tol) break;
                if (fa * fm <= 0.0) {
                    b = xim;
                    fb = fm;
                } else {
                    a = xim;
                    fa = fm;
                }
            }
            accept(xim);
        }
    }
    if (found.empty()) throw std::runtime_error("action_two_point: no ray in the search box");
    std::sort(found.begin(), found.end(),
              [](const TwoPointRay& a, const TwoPointRay& b) { return a.xi0 < b.xi0; });
    return found;
}

LyapunovReport lyapunov_and_ehrenfest(const HamiltonianField& field, double e_lo, double e_hi,
                                      double horizon, double eps, std::size_t samples,
                                      const std::vector<std::pair<double, double>>& extra_seeds) {
    LyapunovReport rep;
    // sample the shell by scanning a phase-space grid
    std::vector<std::pair<double, double>> seeds = extra_seeds;
    const double xlo = field.x_periodic ? 0.0 : std::max(field.x_min, -10.0);
    const double xhi = field.x_periodic ? field.x_period : std::min(field.x_max, 10.0);
    const double klo = std::max(field.xi_min, -10.0), khi = std::min(field.xi_max, 10.0);
    const std::size_t g = 48;
    for (std::size_t i = 0; i < g && seeds.size() < samples; ++i)
        for (std::size_t j = 0; j < g && seeds.size() < samples; ++j) {
            const double xx = xlo + (xhi - xlo) * (static_cast<double>(i) + 0.13) / g;
            const double kk = klo + (khi - klo) * (static_cast<double>(j) + 0.57) / g;
            const double e = field.H(xx, kk);
            if (e >= e_lo && e <= e_hi) seeds.emplace_back(xx, kk);
        }
    if (seeds.empty()) throw std::invalid_argument("lyapunov: empty energy shell sample");

    double best_rate = 0.0, best_r2 = 0.0, best_late_ratio = 0.0;
    for (const auto& [x0, k0] : seeds) {
        // Benettin: accumulate log growth of a tangent vector with periodic
        // renormalization
        const int chunks = 64;
        const double dt = horizon / chunks;
        double vx = 1.0, vk = 0.0;
        double acc = 0.0;
        double x = x0, k = k0;
        std::vector<double> ts, ls;
        bool failed = false;
        for (int cidx = 0; cidx < chunks; ++cidx) {
            RayTrajectory seg;
            try {
                seg = integrate_flow(field, x, k, dt, 1e-10, false);
            } catch (const std::runtime_error&) {
                failed = true;
                break;
            }
            const auto& M = seg.mono_end();
            const double nvx = M[0] * vx + M[1] * vk;
            const double nvk = M[2] * vx + M[3] * vk;
            const double nrm = std::hypot(nvx, nvk);
            acc += std::log(nrm);
            vx = nvx / nrm;
            vk = nvk / nrm;
            x = seg.x_end();
            k = seg.xi_end();
            ts.push_back(dt * (cidx + 1));
            ls.push_back(acc);
        }
        if (failed || ts.size() < 16) continue;

        auto fit = [](const std::vector<double>& tv, const std::vector<double>& lv, std::size_t lo,
                      std::size_t hi, double* r2_out) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
            const double m = static_cast<double>(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                sx += tv[i];
                sy += lv[i];
                sxx += tv[i] * tv[i];
                sxy += tv[i] * lv[i];
                syy += lv[i] * lv[i];
            }
            const double denom = m * sxx - sx * sx;
            const double rate = (m * sxy - sx * sy) / denom;
            if (r2_out) {
                const double r2den = m * syy - sy * sy;
                *r2_out = r2den > 1e-30
                              ? (m * sxy - sx * sy) * (m * sxy - sx * sy) / (denom * r2den)
                              : 0.0;
            }
            return rate;
        };
        // Exponential growth accumulates equal log increments in both halves
        // of a window; log t growth front-loads them.  Near-separatrix orbits
        // wander off the saddle after a while, so scan prefix windows from the
        // full horizon down and keep the longest steady one.
        for (std::size_t len = ts.size(); len >= 16; len /= 2) {
            const double inc1 = ls[len / 2 - 1] - ls.front();
            const double inc2 = ls[len - 1] - ls[len / 2 - 1];
            const double ratio = std::abs(inc1) > 1e-12 ? inc2 / inc1 : 0.0;
            if (ratio < 0.6) continue;
            double r2 = 0.0;
            const double rate = fit(ts, ls, 0, len, &r2);
            if (rate > best_rate) {
                best_rate = rate;
                best_r2 = r2;
                best_late_ratio = ratio;
            }
            break;
        }
    }

    rep.r2 = best_r2;
    if (best_rate < 1e-2 || best_late_ratio < 0.4) {
        // growth indistinguishable from polynomial: integrable flow
        rep.hyperbolic = false;
        rep.lambda = best_rate;
        rep.t_ehrenfest = std::numeric_limits<double>::infinity();
        return rep;
    }
    rep.lambda = 1.1 * best_rate;  // any upper bound works; 10% safety
    rep.converged = best_r2 >= 0.9;
    rep.t_ehrenfest = std::abs(std::log(eps)) / rep.lambda;
    return rep;
}

void SymbolGrid::export_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "# x,xi,value\n";
    f.precision(15);
    for (std::size_t i = 0; i < x_grid.size(); ++i)
        for (std::size_t j = 0; j < xi_grid.size(); ++j)
            f << x_grid[i] << "," << xi_grid[j] << "," << at(i, j) << "\n";
}

SymbolGrid egorov_transport(const HamiltonianField& field,
                            const std::function<double(double, double)>& a, double t,
                            const std::vector<double>& x_grid, const std::vector<double>& xi_grid,
                            double flow_tol) {
    if (t < 0.0) throw std::invalid_argument("egorov_transport: t must be >= 0");
    SymbolGrid out;
    out.x_grid = x_grid;
    out.xi_grid = xi_grid;
    out.values.assign(x_grid.size() * xi_grid.size(), 0.0);
    out.ok.assign(out.values.size(), true);
    for (std::size_t i = 0; i < x_grid.size(); ++i)
        for (std::size_t j = 0; j < xi_grid.size(); ++j) {
            const std::size_t idx = i * xi_grid.size() + j;
            try {
                const RayTrajectory back = integrate_flow(field, x_grid[i], xi_grid[j], t, flow_tol,
                                                          /*backward=*/true);
                // D accumulated along the backward orbit equals
                // int_{-t}^0 h1(Phi_s z) ds
                out.values[idx] = std::exp(2.0 * back.D.back()) * a(back.x_end(), back.xi_end());
            } catch (const std::runtime_error&) {
                out.values[idx] = 0.0;  // exited: compact support
            }
        }
    return out;
}

SymbolGrid pi_symbol(const HamiltonianField& field,
                     const std::function<double(double, double, double)>& l2, double t_gamma,
                     const std::vector<double>& x_grid, const std::vector<double>& xi_grid,
                     double quad_tol) {
    if (!(t_gamma > 0.0) || !std::isfinite(t_gamma))
        throw std::invalid_argument("pi_symbol: finite positive horizon required");
    SymbolGrid out;
    out.x_grid = x_grid;
    out.xi_grid = xi_grid;
    out.values.assign(x_grid.size() * xi_grid.size(), 0.0);
    out.ok.assign(out.values.size(), true);

    for (std::size_t i = 0; i < x_grid.size(); ++i)
        for (std::size_t j = 0; j < xi_grid.size(); ++j) {
            const std::size_t idx = i * xi_grid.size() + j;
            const double omega = -field.H(x_grid[i], xi_grid[j]);

            // checkpointed backward orbit; g(t) by short re-integration from
            // the nearest earlier checkpoint
            RayTrajectory back;
            try {
                back = integrate_flow(field, x_grid[i], xi_grid[j], t_gamma, 1e-10, true);
            } catch (const std::runtime_error&) {
                out.ok[idx] = false;
                continue;
            }
            auto g = [&](double tq) -> double {
                if (tq <= 0.0) return std::exp(0.0) * l2(x_grid[i], xi_grid[j], omega);
                // locate checkpoint <= tq
                std::size_t lo = 0, hi = back.t.size() - 1;
                while (hi - lo > 1) {
                    const std::size_t mid = (lo + hi) / 2;
                    if (back.t[mid] <= tq)
                        lo = mid;
                    else
                        hi = mid;
                }
                double x = back.x[lo], xi = back.xi[lo], D = back.D[lo];
                const double rem = tq - back.t[lo];
                if (rem > 1e-14) {
                    const RayTrajectory seg = integrate_flow(field, x, xi, rem, 1e-10, true);
                    x = seg.x_end();
                    xi = seg.xi_end();
                    D += seg.D.back();
                }
                return std::exp(2.0 * D) * l2(x, xi, omega);
            };
            bool converged = true;
            out.values[idx] = adaptive_simpson(g, 0.0, t_gamma, quad_tol, &converged);
            out.ok[idx] = converged;
            if (out.values[idx] < 0.0 && out.values[idx] > -quad_tol) out.values[idx] = 0.0;
        }
    return out;
}

WkbPrediction wkb_phase_predict(const HamiltonianField& field, double y, double x, double tau,
                                double eps, double xi_lo, double xi_hi) {
    const auto rays = action_two_point(field, y, x, tau, xi_lo, xi_hi);
    WkbPrediction pred;
    pred.amplitude_order_exponent = -0.5;
    for (const auto& r : rays) {
        if (r.conjugate) throw std::runtime_error("wkb_phase_predict: non-generic triple (conjugate ray)");
        WkbPrediction::PerRay pr;
        pr.action = r.action;
        pr.xi0 = r.xi0;
        pr.phase_mod_2pi = std::fmod(r.action / eps, kTwoPi);
        if (pr.phase_mod_2pi < 0.0) pr.phase_mod_2pi += kTwoPi;
        pred.rays.push_back(pr);
    }
    // dominant ray: least |xi0| (slowest, least damped over fixed tau here)
    const auto dom = std::min_element(pred.rays.begin(), pred.rays.end(),
                                      [](const auto& a, const auto& b) {
                                          return std::abs(a.xi0) < std::abs(b.xi0);
                                      });
    pred.dominant_phase = dom->phase_mod_2pi;
    return pred;
}

}  // namespace corrlab
