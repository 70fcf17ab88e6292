#pragma once

#include <array>
#include <functional>
#include <utility>
#include <vector>

#include "corrlab/grid.hpp"
#include "corrlab/waveguide.hpp"

namespace corrlab {

// Scalar ray Hamiltonian on a 2D phase space (x, xi), with first and second
// derivatives (the tangent flow needs the Hessian), and a damping symbol
// h1(x, xi) <= -k_floor < 0.
struct HamiltonianField {
    std::function<double(double, double)> H;
    std::function<double(double, double)> Hx, Hxi;
    std::function<double(double, double)> Hxx, Hxxi, Hxixi;
    std::function<double(double, double)> h1;
    double k_floor = 0.0;

    bool x_periodic = false;
    double x_period = 0.0;
    double x_min = -1e30, x_max = 1e30;
    double xi_min = -1e30, xi_max = 1e30;

    bool in_bounds(double x, double xi) const {
        if (!x_periodic && (x < x_min || x > x_max)) return false;
        return xi >= xi_min && xi <= xi_max;
    }

    // H = xi^2 (free motion on a circle of the given period).
    static HamiltonianField free_particle(double k_damp, double period = kTwoPi);
    // H = xi^2 + x^2 (rotation at rate 2).
    static HamiltonianField harmonic(double k_damp);
    // H = xi^2 - depth cos x (separatrix saddle at x = pi, exponent
    // sqrt(2 depth)).
    static HamiltonianField pendulum_well(double depth, double k_damp);
    // Tabulated dispersion branch; interpolant derivatives.
    static HamiltonianField from_table(const TabulatedHamiltonian& tab, double k_damp);
};

struct RayTrajectory {
    std::vector<double> t;
    std::vector<double> x, xi;
    std::vector<double> S;                       // action integral xi dx - H dt
    std::vector<double> D;                       // damping integral h1
    std::vector<std::array<double, 4>> mono;     // tangent flow (row-major 2x2)
    bool exited = false;
    double energy_drift = 0.0;

    double x_end() const { return x.back(); }
    double xi_end() const { return xi.back(); }
    const std::array<double, 4>& mono_end() const { return mono.back(); }

    void export_csv(const std::string& path) const;  // t, x, xi, S, D
};

// Adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) with step rejection on
// both local error and energy drift; integrates the variational system and
// the action/damping integrands alongside.  backward = true integrates the
// reversed field (yields Phi_{-t}).
RayTrajectory integrate_flow(const HamiltonianField& field, double x0, double xi0, double t_end,
                             double tol, bool backward = false);

struct TwoPointRay {
    double xi0 = 0.0;
    double action = 0.0;
    bool conjugate = false;
    RayTrajectory ray;
};
// Shooting over initial xi in [xi_lo, xi_hi]: all rays from y to x in time t
// (including winding images on periodic domains).  Signals when no solution
// lies in the box.
std::vector<TwoPointRay> action_two_point(const HamiltonianField& field, double y, double x,
                                          double t, double xi_lo, double xi_hi,
                                          double shooting_tol = 1e-10, int scan_points = 96);

struct LyapunovReport {
    double lambda = 0.0;       // fitted max growth rate plus 10% safety
    double t_ehrenfest = 0.0;  // |log eps| / lambda
    double r2 = 0.0;           // fit quality of the max-growth sample
    bool hyperbolic = true;    // false: growth consistent with 0 (integrable)
    bool converged = true;     // R^2 >= 0.9 for the reported sample
    double t_gamma(double gamma) const { return (0.5 - gamma) * t_ehrenfest; }
};
// Orthonormalized tangent-flow growth over sampled shell initial conditions;
// extra_seeds lets callers pin known expanding points (saddles).
LyapunovReport lyapunov_and_ehrenfest(const HamiltonianField& field, double e_lo, double e_hi,
                                      double horizon, double eps, std::size_t samples = 24,
                                      const std::vector<std::pair<double, double>>& extra_seeds = {});

struct SymbolGrid {
    std::vector<double> x_grid, xi_grid;
    std::vector<double> values;  // [ix * nxi + ixi]
    std::vector<bool> ok;        // per-node integration status
    double at(std::size_t ix, std::size_t ixi) const { return values[ix * xi_grid.size() + ixi]; }
    void export_csv(const std::string& path) const;  // x, xi, value
};

// Symbol transported along the backward flow with the accumulated damping
// factor: a0(t)(z) = exp(2 int_{-t}^0 h1(Phi_s z) ds) a(Phi_{-t} z).
// Nodes leaving the domain map to 0.
SymbolGrid egorov_transport(const HamiltonianField& field,
                            const std::function<double(double, double)>& a, double t,
                            const std::vector<double>& x_grid, const std::vector<double>& xi_grid,
                            double flow_tol = 1e-10);

// Time quadrature of the damped backward transport of the source symbol:
// pi(z) = int_0^{T} exp(2 int_{-t}^0 h1(Phi_s z) ds)
//               |l|^2(Phi_{-t} z, -H(z)) dt   (adaptive Simpson, tol given).
SymbolGrid pi_symbol(const HamiltonianField& field,
                     const std::function<double(double, double, double)>& l2, double t_gamma,
                     const std::vector<double>& x_grid, const std::vector<double>& xi_grid,
                     double quad_tol = 1e-8);

struct WkbPrediction {
    struct PerRay {
        double action = 0.0;
        double phase_mod_2pi = 0.0;  // S / eps mod 2 pi
        double xi0 = 0.0;
    };
    std::vector<PerRay> rays;
    double dominant_phase = 0.0;
    double amplitude_order_exponent = -0.5;  // eps^{-d/2}, d = 1
};
// Phase prediction S(tau, x, y)/eps per ray; throws on non-generic triples
// (a conjugate ray among the solutions).
WkbPrediction wkb_phase_predict(const HamiltonianField& field, double y, double x, double tau,
                                double eps, double xi_lo, double xi_hi);

}  // namespace corrlab
