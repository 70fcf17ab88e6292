#pragma once

#include <functional>
#include <string>
#include <vector>

namespace corrlab {

// Vertical stiffness profile N(x, Z) on Z <= 0, constant N_inf below Z0,
// with a low-velocity well near the surface.
struct VelocityProfile {
    std::function<double(double, double)> N;  // (x, Z)
    double N_inf = 1.0;
    double Z0 = -1.0;

    double N0(double x, int samples = 2048) const;  // min over Z in [Z0, 0]
    void validate(double x) const;

    static VelocityProfile square_well(double n0, double n_inf, double z0);
    // JSON: {"N_inf":..,"Z0":..,"stations":[{"x":..,"knots":[[Z,N],...]},...]}
    // piecewise linear in Z per station, linear blend in x.
    static VelocityProfile from_json(const std::string& text);
};

struct SturmOptions {
    double threshold_margin = 1e-3;  // discard eigenvalues above N_inf xi^2 (1 - margin)
    double decay_guard = 1e-8;       // max eigenvector mass in the bottom tenth
    // sweeps drop modes whose depth decay the grid cannot resolve instead of
    // signalling (near-continuum neighborhood)
    bool discard_unresolved = false;
};

struct SturmEigs {
    std::vector<double> lambda;               // ascending, strictly below threshold
    std::vector<std::vector<double>> modes;   // node values, unit discrete norm
    std::vector<double> z;                    // node coordinates (Z_bot..0)
    double h = 0.0;
    double threshold = 0.0;
};

// Trapped modes of -d/dZ(N d/dZ) + N |xi|^2 with Neumann at Z = 0, Dirichlet
// at Z_bot (justified by trapped-mode decay; a mass guard checks it).
// Flux-form three-point assembly; eigenvalues by Sturm-sequence bisection,
// eigenvectors by inverse iteration.
SturmEigs sturm_liouville_eigs(const VelocityProfile& profile, double x, double xi, double Z_bot,
                               std::size_t nodes, const SturmOptions& opts = {});

struct DispersionTable {
    std::vector<double> xi;
    // branch-major: lambda[branch][i_xi], NaN before a branch is born
    std::vector<std::vector<double>> lambda;
    std::vector<std::vector<double>> omega;           // sqrt(lambda)
    std::vector<std::vector<double>> group_velocity;  // d omega / d xi
    std::vector<std::size_t> mode_count;              // per xi
    std::vector<bool> branch_born_inside;             // birth flags
    double x = 0.0;

    void export_csv(const std::string& path) const;  // x, xi, branch, lambda, omega, group_velocity
};

// Eigenvalue curves over a xi grid with mode tracking by eigenvector overlap
// (> 0.8 continuation) and Hellmann-Feynman group velocities.
DispersionTable dispersion_table(const VelocityProfile& profile, double x,
                                 const std::vector<double>& xi_grid, double Z_bot,
                                 std::size_t nodes, const SturmOptions& opts = {});

// Sampled effective Hamiltonian H0(x, xi) = sqrt(lambda_j): natural cubic
// spline in xi, linear in x, analytic interpolant derivatives.
struct TabulatedHamiltonian {
    std::vector<double> x_grid;
    std::vector<double> xi_grid;
    std::vector<std::vector<double>> H;  // [ix][ixi]
    // spline second derivatives per x row
    std::vector<std::vector<double>> d2;

    double value(double x, double xi) const;
    double dx(double x, double xi) const;
    double dxi(double x, double xi) const;
    double dxixi(double x, double xi) const;
};

// Exports branch j over an (x, xi) grid; signals holes in the branch.
TabulatedHamiltonian effective_hamiltonian_export(const VelocityProfile& profile,
                                                  const std::vector<double>& x_grid,
                                                  const std::vector<double>& xi_grid,
                                                  std::size_t branch, double Z_bot,
                                                  std::size_t nodes, const SturmOptions& opts = {});

// Discrete operator application on node values (same assembly as the
// eigensolver); weights are h on interior nodes, h/2 at the Neumann end.
std::vector<double> sturm_apply(const VelocityProfile& profile, double x, double xi, double Z_bot,
                                std::size_t nodes, const std::vector<double>& v);
std::vector<double> sturm_weights(double Z_bot, std::size_t nodes);

// Transcendental-equation roots for the piecewise-constant well (test oracle
// lives with the solver because the scenario runner reports against it too):
// N0 p tan(p |Z0|) = N_inf kappa, p = sqrt(lambda/N0 - xi^2),
// kappa = sqrt(xi^2 - lambda/N_inf).
std::vector<double> square_well_oracle(double n0, double n_inf, double z0, double xi,
                                       double tol = 1e-12);

}  // namespace corrlab
