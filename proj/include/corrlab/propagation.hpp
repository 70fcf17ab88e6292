#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "corrlab/grid.hpp"
#include "corrlab/noise.hpp"
#include "corrlab/spectral.hpp"

namespace corrlab {

enum class ModelVariant { first_order_scalar, second_order, two_component };

// Damped evolution model over a spectral decomposition.  Constant-coefficient
// variants evolve each mode exactly.
//   first_order_scalar :  du/dt + (k + i omega_k) u = f per mode
//   second_order       :  u_tt + 2 a u_t - Lap u = f   (state (v, v_t) per mode)
//   two_component      :  eps/i U_t + H U = eps/i F, H = [[0, -eps sqrt(mu)],
//                          [-eps sqrt(mu), -2 i eps a]] per mode
struct DampedWaveModel {
    ModelVariant variant = ModelVariant::second_order;
    SpectralDecomposition dec;
    double epsilon = 1.0;
    double damping = 0.0;            // k (first order) or a (wave forms)
    std::vector<double> omega;       // first order: physical phase rate per mode
    std::vector<double> damping_grid;  // variable a(x) (second_order only); empty = constant
    bool omit_zero_mode = false;     // drop mu = 0 modes from forcing and observables

    std::size_t n_modes() const { return dec.n_modes(); }
    bool spectral_exact() const { return damping_grid.empty(); }
    bool mode_active(std::size_t k) const {
        return !(omit_zero_mode && dec.eigenvalues[k] == 0.0);
    }
    // Slowest modal decay rate; attenuation time is its inverse.
    double decay_rate_floor() const;
    double attenuation_time() const { return 1.0 / decay_rate_floor(); }

    std::string hash() const;  // stable content hash for manifests

    static DampedWaveModel first_order(const SpectralDecomposition& dec,
                                       const std::function<double(double)>& h0_of_xi,
                                       double epsilon, double k_damping);
    static DampedWaveModel second_order(const SpectralDecomposition& dec, double a,
                                        bool omit_zero_mode = true);
    static DampedWaveModel second_order_variable(const SpectralDecomposition& dec,
                                                 const std::vector<double>& a_grid);
};

// Mode-space state: comp_a for scalar models; (comp_a, comp_b) = (v, v_t) for
// second_order and (U1, U2) for two_component.
struct ModeState {
    ModelVariant variant = ModelVariant::first_order_scalar;
    std::vector<cplx> comp_a;
    std::vector<cplx> comp_b;  // empty for scalar

    static ModeState zero(const DampedWaveModel& m);
};

// Exact 2x2 mode propagator entries for the wave forms.
struct Mode2x2 {
    cplx m11, m12, m21, m22;
};
Mode2x2 second_order_mode_propagator(double mu, double a, double t);
Mode2x2 two_component_mode_propagator(double mu, double a, double t);

// Semigroup application; rejects t < 0.  Variable damping uses Strang
// splitting with step <= 0.1 / max a(x).
ModeState evolve(const DampedWaveModel& model, const ModeState& state, double t);

struct Station {
    std::size_t grid_index = 0;
    std::vector<double> position;
};
Station station_at(const DiscreteDomain& domain, std::size_t grid_index);
// Nearest grid index to a physical coordinate.
std::size_t nearest_grid_index(const DiscreteDomain& domain, const std::vector<double>& x);

struct FieldTrajectory {
    double dt = 0.0;            // sample spacing of the stored series
    std::size_t samples = 0;
    std::size_t burn_in_samples = 0;
    std::vector<Station> stations;
    std::size_t n_comp = 1;
    // series[s][c][t]
    std::vector<std::vector<std::vector<cplx>>> series;
    std::vector<Field> snapshots;
    std::size_t snapshot_stride = 0;

    void export_binary(const std::string& path_bin, const std::string& path_manifest,
                       std::uint64_t seed, const std::string& model_hash) const;
};

struct CausalSolveOptions {
    double burn_in_time = -1.0;   // < 0: 8 * T_att
    bool require_stationary = true;  // enforce burn-in >= 5 * T_att
    std::size_t record_stride = 1;
    std::size_t snapshot_stride = 0;  // 0 = none
    bool record_second_component = false;
    bool record_branches = false;     // two_component: record branch coefficients
};

// March u_{n+1} = Omega(dt) u_n + Omega(dt/2) f_n dt and record stations.
// Signals when fewer than 5 * T_att of burn-in is available.
FieldTrajectory causal_solve(const DampedWaveModel& model, SourceStream& source, double dt,
                             std::size_t steps, const std::vector<Station>& stations,
                             const CausalSolveOptions& opts = {});
FieldTrajectory causal_solve(const DampedWaveModel& model, const SourceTrajectory& source,
                             const std::vector<Station>& stations,
                             const CausalSolveOptions& opts = {});

// Causal Green's function of the second-order form at points A, B:
// 0 for t <= 0, else sum_k e^{-a t} sinc_k(t) e_k(A) conj(e_k(B)).
cplx greens_function(const DampedWaveModel& model, double t, const std::vector<double>& A,
                     const std::vector<double>& B, bool include_zero_mode = true);

struct AttenuationReport {
    double fitted_rate = 0.0;
    double prefactor_C = 1.0;
    bool degenerate = false;
    double attenuation_time = 0.0;
};
// Operator-norm proxy (max modal branch amplification) fitted over [0, horizon];
// optionally measures the decay of a provided state instead.
AttenuationReport attenuation_check(const DampedWaveModel& model, double horizon,
                                    const ModeState* state = nullptr);

// Branch data of the exact per-mode diagonalization of the two-component form.
struct BranchSystem {
    DampedWaveModel model;  // two_component variant
    // per mode: eigenvalues lambda_pm of H/eps (branch factors e^{-i lambda t}),
    // right eigenvectors columns of V, left rows of V^{-1}
    std::vector<std::array<cplx, 2>> lambda;
    std::vector<std::array<std::array<cplx, 2>, 2>> V;
    std::vector<std::array<std::array<cplx, 2>, 2>> Vinv;
    // Unitary polarization basis of the undamped symbol: (1, -1)/sqrt2, (1, 1)/sqrt2.
    std::array<std::array<cplx, 2>, 2> unitary_basis(std::size_t mode) const;
    // Spectral projectors P_j = v_j w_j^T; P_0 + P_1 = Id exactly.
    std::array<std::array<cplx, 2>, 2> projector(std::size_t mode, int branch) const;
};

// Exact block reduction of a constant-coefficient second-order model.
// Rejects variable damping.
BranchSystem two_component_reduce(const DampedWaveModel& second_order_model);

}  // namespace corrlab
