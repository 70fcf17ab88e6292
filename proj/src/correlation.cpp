#include "corrlab/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "corrlab/fft.hpp"
#include "corrlab/wave_kernels.hpp"

namespace corrlab {

namespace {

// Decaying channels of a spectral-exact model: the evolution acts as
// e^{-s_c t} per channel, white forcing enters with coefficient gain_c, and
// the scalar observable u collects obs_c.
struct Channels {
    std::vector<cplx> s;
    std::vector<cplx> gain;
    std::vector<std::size_t> mode;
    std::vector<cplx> obs;
    std::vector<int> branch;
};

Channels build_channels(const DampedWaveModel& model, bool branch_resolved) {
    Channels ch;
    const std::size_t n = model.n_modes();
    if (model.variant == ModelVariant::first_order_scalar) {
        for (std::size_t k = 0; k < n; ++k) {
            if (!model.mode_active(k)) continue;
            ch.s.push_back(cplx(model.damping, model.omega[k]));
            ch.gain.push_back(cplx(1.0, 0.0));
            ch.mode.push_back(k);
            ch.obs.push_back(cplx(1.0, 0.0));
            ch.branch.push_back(0);
        }
        return ch;
    }
    if (!model.spectral_exact())
        throw std::invalid_argument("theoretical correlation: variable damping unsupported");

    const double a = model.damping;
    if (model.variant == ModelVariant::second_order) {
        for (std::size_t k = 0; k < n; ++k) {
            if (!model.mode_active(k)) continue;
            const double mu = model.dec.eigenvalues[k];
            if (mu == 0.0)
                throw std::invalid_argument(
                    "zero mode has no stationary correlation; set omit_zero_mode");
            const cplx q = std::sqrt(cplx(mu - a * a, 0.0));
            if (std::abs(q) < 1e-9 * a)
                throw std::invalid_argument("critically damped mode unsupported in channel form");
            const cplx iq = cplx(0, 1) * q;
            // companion eigenpairs lambda = -a +- iq, branch coefficient
            // sources -i/(2q) and +i/(2q), observable u = b_+ + b_-
            ch.s.push_back(cplx(a, 0) - iq);
            ch.gain.push_back(cplx(0, -1) / (2.0 * q));
            ch.mode.push_back(k);
            ch.obs.push_back(cplx(1, 0));
            ch.branch.push_back(0);
            ch.s.push_back(cplx(a, 0) + iq);
            ch.gain.push_back(cplx(0, 1) / (2.0 * q));
            ch.mode.push_back(k);
            ch.obs.push_back(cplx(1, 0));
            ch.branch.push_back(1);
        }
        return ch;
    }

    // two_component: exact branch channels with forcing (0, -i eps f)
    DampedWaveModel so = model;
    so.variant = ModelVariant::second_order;
    const BranchSystem bs = two_component_reduce(so);
    for (std::size_t k = 0; k < n; ++k) {
        if (!model.mode_active(k)) continue;
        const double mu = model.dec.eigenvalues[k];
        if (mu == 0.0)
            throw std::invalid_argument("zero mode has no stationary correlation; set omit_zero_mode");
        for (int j = 0; j < 2; ++j) {
            ch.s.push_back(cplx(0, 1) * bs.lambda[k][static_cast<std::size_t>(j)]);
            ch.gain.push_back(bs.Vinv[k][static_cast<std::size_t>(j)][1] * cplx(0.0, -model.epsilon));
            ch.mode.push_back(k);
            if (branch_resolved)
                ch.obs.push_back(cplx(1, 0));
            else
                ch.obs.push_back(bs.V[k][0][static_cast<std::size_t>(j)] /
                                 (model.epsilon * std::sqrt(mu)));
            ch.branch.push_back(j);
        }
    }
    return ch;
}

cplx psi_hat(const CovarianceKernel& K, cplx s) {
    cplx acc{0.0, 0.0};
    for (long j = -K.half_lags; j <= K.half_lags; ++j) {
        const double u = static_cast<double>(j) * K.lag_dt;
        acc += K.lag_dt * K.psi_at(j) * std::exp(s * u);
    }
    return acc;
}

cplx noise_cov(const CovarianceKernel& K, std::size_t k, std::size_t kp) {
    if (!K.dense.empty()) return K.dense[k][kp];
    return (k == kp) ? cplx(K.mode_weight[k], 0.0) : cplx{0.0, 0.0};
}

// Pi_{cc'} = PsiHat(s_c) gain_c conj(gain_c') M(k,k') / (s_c + conj(s_c')).
std::vector<std::vector<cplx>> channel_pi(const Channels& ch, const CovarianceKernel& K) {
    const std::size_t nc = ch.s.size();
    std::vector<std::vector<cplx>> Pi(nc, std::vector<cplx>(nc));
    std::vector<cplx> ph(nc);
    for (std::size_t c = 0; c < nc; ++c) ph[c] = psi_hat(K, ch.s[c]);
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t d = 0; d < nc; ++d) {
            const cplx M = noise_cov(K, ch.mode[c], ch.mode[d]);
            Pi[c][d] = ph[c] * ch.gain[c] * std::conj(ch.gain[d]) * M / (ch.s[c] + std::conj(ch.s[d]));
        }
    return Pi;
}

// Independent route: composite-Simpson quadrature of the stationary integral
// over mode-pair 2x2 blocks (or scalars), truncated at T_att ln(1/tol).
struct QuadPi {
    // block[(k,kp)] as 2x2 (scalar models use entry (0,0) only)
    std::vector<cplx> data;
    std::size_t n = 0;
    bool scalar = true;
    cplx* block(std::size_t k, std::size_t kp) { return &data[4 * (k * n + kp)]; }
    const cplx* block(std::size_t k, std::size_t kp) const { return &data[4 * (k * n + kp)]; }
};

Mode2x2 mode_propagator_any_t(const DampedWaveModel& m, std::size_t k, double t) {
    const double mu = m.dec.eigenvalues[k];
    const double at = std::abs(t);
    Mode2x2 E = (m.variant == ModelVariant::two_component)
                    ? two_component_mode_propagator(mu, m.damping, at)
                    : second_order_mode_propagator(mu, m.damping, at);
    if (t >= 0.0) return E;
    const cplx det = E.m11 * E.m22 - E.m12 * E.m21;
    return {E.m22 / det, -E.m12 / det, -E.m21 / det, E.m11 / det};
}

QuadPi quadrature_pi(const DampedWaveModel& model, const CovarianceKernel& K, double tol) {
    const std::size_t n = model.n_modes();
    if (n > 200) throw std::invalid_argument("quadrature route capped at 200 modes");
    QuadPi out;
    out.n = n;
    out.scalar = model.variant == ModelVariant::first_order_scalar;
    out.data.assign(4 * n * n, cplx{0, 0});

    const double s_max = model.attenuation_time() * std::log(1.0 / tol);
    const std::size_t N = 16384;  // composite Simpson nodes (even)
    const double h = s_max / static_cast<double>(N);

    if (out.scalar) {
        // L_kk' = PsiHat(s_k) M_kk'; Pi = int e^{-s_k t} L e^{-conj(s_k') t}
        std::vector<cplx> srate(n);
        for (std::size_t k = 0; k < n; ++k) srate[k] = cplx(model.damping, model.omega[k]);
        for (std::size_t k = 0; k < n; ++k) {
            if (!model.mode_active(k)) continue;
            const cplx Lrow = psi_hat(K, srate[k]);
            for (std::size_t kp = 0; kp < n; ++kp) {
                if (!model.mode_active(kp)) continue;
                const cplx M = noise_cov(K, k, kp);
                if (M == cplx{0, 0}) continue;
                const cplx rate = srate[k] + std::conj(srate[kp]);
                cplx acc{0, 0};
                for (std::size_t i = 0; i <= N; ++i) {
                    const double w = (i == 0 || i == N) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
                    acc += w * std::exp(-rate * (h * static_cast<double>(i)));
                }
                out.block(k, kp)[0] = Lrow * M * acc * (h / 3.0);
            }
        }
        return out;
    }

    // wave forms: forcing covariance [[0,0],[0,M]] in (v, v_t) coordinates;
    // for two_component the injected vector is (0, -i eps f): extra |eps|^2.
    if (n > 24)
        throw std::invalid_argument("wave-form quadrature route capped at 24 modes (node cache)");
    const bool twocomp = model.variant == ModelVariant::two_component;
    const double inj = twocomp ? model.epsilon * model.epsilon : 1.0;

    // cache propagators at quadrature nodes
    std::vector<std::vector<Mode2x2>> Enode(n, std::vector<Mode2x2>(N + 1));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i <= N; ++i)
            Enode[k][i] = mode_propagator_any_t(model, k, h * static_cast<double>(i));

    // temporal factor: L_{kk'} = sum_j dt Psi_j E_k(-u_j) C_f, C_f = [[0,0],[0,M]]
    for (std::size_t k = 0; k < n; ++k) {
        if (!model.mode_active(k)) continue;
        // Lk = sum_j dt Psi_j E_k(-u_j) * [[0,0],[0,1]]  (columns: only second col)
        cplx L12{0, 0}, L22{0, 0};
        for (long j = -K.half_lags; j <= K.half_lags; ++j) {
            const double u = static_cast<double>(j) * K.lag_dt;
            const Mode2x2 Em = mode_propagator_any_t(model, k, -u);
            const double w = K.lag_dt * K.psi_at(j);
            L12 += w * Em.m12;
            L22 += w * Em.m22;
        }
        for (std::size_t kp = 0; kp < n; ++kp) {
            if (!model.mode_active(kp)) continue;
            const cplx M = inj * noise_cov(K, k, kp);
            if (M == cplx{0, 0}) continue;
            // Pi_{kk'} = int E_k(t) L [[0,0],[0,M]]-applied E_k'(t)^dagger dt,
            // with L columns (L12, L22) in the second slot.
            cplx acc[4] = {cplx{0, 0}, cplx{0, 0}, cplx{0, 0}, cplx{0, 0}};
            for (std::size_t i = 0; i <= N; ++i) {
                const double w = ((i == 0 || i == N) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0)) * (h / 3.0);
                const Mode2x2& A = Enode[k][i];
                const Mode2x2& B = Enode[kp][i];
                // G = A * [[0, L12],[0, L22]] = [[0, A11 L12 + A12 L22],[0, A21 L12 + A22 L22]]
                const cplx G12 = A.m11 * L12 + A.m12 * L22;
                const cplx G22 = A.m21 * L12 + A.m22 * L22;
                // H = G * M * B^dagger ; only G's second column acts on B's second row conj
                acc[0] += w * G12 * M * std::conj(B.m12);
                acc[1] += w * G12 * M * std::conj(B.m22);
                acc[2] += w * G22 * M * std::conj(B.m12);
                acc[3] += w * G22 * M * std::conj(B.m22);
            }
            cplx* blk = out.block(k, kp);
            for (int i = 0; i < 4; ++i) blk[i] = acc[i];
        }
    }
    return out;
}

std::vector<cplx> station_basis(const DampedWaveModel& m, const Station& st) {
    std::vector<cplx> phi(m.n_modes());
    for (std::size_t k = 0; k < m.n_modes(); ++k) phi[k] = m.dec.basis_value(k, st.position);
    return phi;
}

}  // namespace

void CorrelationFunction::export_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "# pair_id,tau,re,im,sigma";
    if (n_comp > 1) f << "  (components flattened: entry = c1*" << n_comp << "+c2)\n";
    else f << "\n";
    f.precision(15);
    for (std::size_t p = 0; p < pairs.size(); ++p)
        for (long j = -half_lags; j <= half_lags; ++j)
            for (std::size_t c1 = 0; c1 < n_comp; ++c1)
                for (std::size_t c2 = 0; c2 < n_comp; ++c2) {
                    const auto v = value(p, j, c1, c2);
                    const double sg = sigma.empty() ? 0.0 : sigma[index(p, j, c1, c2)];
                    f << p;
                    if (n_comp > 1) f << "." << c1 << c2;
                    f << "," << lag(j) << "," << v.real() << "," << v.imag() << "," << sg << "\n";
                }
}

CorrelationFunction empirical_correlation(const FieldTrajectory& traj,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                          long max_lag, const EmpiricalOptions& opts) {
    const std::size_t w0 = opts.window_start;
    const std::size_t N = opts.window_samples == 0 ? traj.samples - w0 : opts.window_samples;
    if (w0 < traj.burn_in_samples)
        throw std::invalid_argument("empirical_correlation: window starts before burn-in");
    if (w0 + N > traj.samples) throw std::invalid_argument("empirical_correlation: window exceeds trajectory");
    if (max_lag < 1 || static_cast<std::size_t>(4 * max_lag) >= N)
        throw std::invalid_argument("empirical_correlation: window too short for requested max_lag");

    CorrelationFunction c;
    c.lag_dt = traj.dt;
    c.half_lags = max_lag;
    c.stations = traj.stations;
    c.pairs = pairs;
    c.n_comp = opts.all_components ? traj.n_comp : 1;
    c.provenance = CorrProvenance::empirical;
    c.T = static_cast<double>(N) * traj.dt;
    c.values.assign(pairs.size() * c.n_lags() * c.n_comp * c.n_comp, cplx{0, 0});

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [ia, ib] = pairs[p];
        for (std::size_t c1 = 0; c1 < c.n_comp; ++c1)
            for (std::size_t c2 = 0; c2 < c.n_comp; ++c2) {
                std::vector<cplx> a(traj.series[ia][c1].begin() + static_cast<long>(w0),
                                    traj.series[ia][c1].begin() + static_cast<long>(w0 + N));
                std::vector<cplx> b(traj.series[ib][c2].begin() + static_cast<long>(w0),
                                    traj.series[ib][c2].begin() + static_cast<long>(w0 + N));
                const auto sums = lag_correlation(a, b, static_cast<std::size_t>(max_lag));
                for (long j = -max_lag; j <= max_lag; ++j) {
                    const double count = static_cast<double>(N) - std::abs(static_cast<double>(j));
                    c.values[c.index(p, j, c1, c2)] =
                        sums[static_cast<std::size_t>(j + max_lag)] / count;
                }
            }
    }
    return c;
}

CorrelationFunction empirical_correlation_ensemble(const std::vector<FieldTrajectory>& trajs,
                                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                                   long max_lag, const EmpiricalOptions& opts) {
    if (trajs.empty()) throw std::invalid_argument("ensemble: no realizations");
    std::vector<CorrelationFunction> all;
    all.reserve(trajs.size());
    for (const auto& t : trajs) all.push_back(empirical_correlation(t, pairs, max_lag, opts));

    CorrelationFunction mean = all.front();
    const double R = static_cast<double>(all.size());
    for (std::size_t i = 0; i < mean.values.size(); ++i) {
        cplx acc{0, 0};
        for (const auto& c : all) acc += c.values[i];
        mean.values[i] = acc / R;
    }
    mean.sigma.assign(mean.values.size(), 0.0);
    if (all.size() > 1) {
        for (std::size_t i = 0; i < mean.values.size(); ++i) {
            double s2 = 0.0;
            for (const auto& c : all) s2 += std::norm(c.values[i] - mean.values[i]);
            mean.sigma[i] = std::sqrt(s2 / (R - 1.0) / R);  // std of the mean
        }
    }
    mean.realizations = all.size();
    return mean;
}

CorrelationFunction theoretical_correlation(const DampedWaveModel& model,
                                            const CovarianceKernel& K,
                                            const std::vector<Station>& stations,
                                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                            double lag_dt, long half_lags,
                                            const TheoryOptions& opts) {
    CorrelationFunction c;
    c.lag_dt = lag_dt;
    c.half_lags = half_lags;
    c.stations = stations;
    c.pairs = pairs;
    c.provenance = opts.use_quadrature ? CorrProvenance::theoretical_quadrature
                                       : CorrProvenance::closed_form;
    const bool branch_resolved = opts.branch_resolved &&
                                 model.variant == ModelVariant::two_component;
    c.n_comp = branch_resolved ? 2 : 1;
    c.values.assign(pairs.size() * c.n_lags() * c.n_comp * c.n_comp, cplx{0, 0});

    std::vector<std::vector<cplx>> phi;
    phi.reserve(stations.size());
    for (const auto& st : stations) phi.push_back(station_basis(model, st));

    if (!opts.use_quadrature) {
        const Channels ch = build_channels(model, branch_resolved);
        const auto Pi = channel_pi(ch, K);
        const std::size_t nc = ch.s.size();

        auto value_at = [&](std::size_t sa, std::size_t sb, double tau, std::size_t b1,
                            std::size_t b2) {
            // w_d = sum over B-side channels of Pi obs conj(phi_B)
            cplx acc{0, 0};
            for (std::size_t cc = 0; cc < nc; ++cc) {
                if (c.n_comp == 2 && ch.branch[cc] != static_cast<int>(b1)) continue;
                cplx w{0, 0};
                for (std::size_t dd = 0; dd < nc; ++dd) {
                    if (c.n_comp == 2 && ch.branch[dd] != static_cast<int>(b2)) continue;
                    w += Pi[cc][dd] * std::conj(ch.obs[dd] * phi[sb][ch.mode[dd]]);
                }
                acc += ch.obs[cc] * phi[sa][ch.mode[cc]] * std::exp(-ch.s[cc] * tau) * w;
            }
            return acc;
        };

        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const auto [sa, sb] = pairs[p];
            for (long j = -half_lags; j <= half_lags; ++j) {
                const double tau = static_cast<double>(j) * lag_dt;
                for (std::size_t b1 = 0; b1 < c.n_comp; ++b1)
                    for (std::size_t b2 = 0; b2 < c.n_comp; ++b2) {
                        cplx v;
                        if (tau >= 0.0)
                            v = value_at(sa, sb, tau, b1, b2);
                        else
                            v = std::conj(value_at(sb, sa, -tau, b2, b1));
                        c.values[c.index(p, j, b1, b2)] = v;
                    }
            }
        }
        return c;
    }

    // quadrature route (scalar observable only)
    if (branch_resolved)
        throw std::invalid_argument("quadrature route does not resolve branches");
    const QuadPi qpi = quadrature_pi(model, K, opts.quadrature_tol);
    const std::size_t n = model.n_modes();
    const bool scalar = qpi.scalar;
    const bool twocomp = model.variant == ModelVariant::two_component;

    auto value_at_q = [&](std::size_t sa, std::size_t sb, double tau) {
        cplx acc{0, 0};
        for (std::size_t k = 0; k < n; ++k) {
            if (!model.mode_active(k)) continue;
            for (std::size_t kp = 0; kp < n; ++kp) {
                if (!model.mode_active(kp)) continue;
                const cplx* blk = qpi.block(k, kp);
                cplx v;
                if (scalar) {
                    v = std::exp(-cplx(model.damping, model.omega[k]) * tau) * blk[0];
                } else {
                    const Mode2x2 E = mode_propagator_any_t(model, k, tau);
                    // observable u: (v, v_t) entry (0,0); two_component maps
                    // U1 = eps sqrt(mu) u on both sides.
                    cplx c00 = E.m11 * blk[0] + E.m12 * blk[2];
                    if (twocomp) {
                        const double sa_w = model.epsilon * std::sqrt(model.dec.eigenvalues[k]);
                        const double sb_w = model.epsilon * std::sqrt(model.dec.eigenvalues[kp]);
                        c00 /= sa_w * sb_w;
                    }
                    v = c00;
                }
                acc += v * phi[sa][k] * std::conj(phi[sb][kp]);
            }
        }
        return acc;
    };

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [sa, sb] = pairs[p];
        for (long j = -half_lags; j <= half_lags; ++j) {
            const double tau = static_cast<double>(j) * lag_dt;
            c.values[c.index(p, j, 0, 0)] =
                tau >= 0.0 ? value_at_q(sa, sb, tau) : std::conj(value_at_q(sb, sa, -tau));
        }
    }
    return c;
}

cplx theoretical_value(const DampedWaveModel& model, const CovarianceKernel& K, const Station& A,
                       const Station& B, double tau, const TheoryOptions& opts) {
    const auto c = theoretical_correlation(model, K, {A, B}, {{0, 1}}, std::abs(tau) + 1e-30, 1, opts);
    return c.value(0, tau >= 0.0 ? 1 : -1);
}

std::vector<std::vector<cplx>> theoretical_pi_matrix(const DampedWaveModel& model,
                                                     const CovarianceKernel& K,
                                                     const std::vector<Station>& stations) {
    const Channels ch = build_channels(model, false);
    const auto Pi = channel_pi(ch, K);
    const std::size_t nc = ch.s.size();
    const std::size_t ns = stations.size();
    std::vector<std::vector<cplx>> phi;
    for (const auto& st : stations) phi.push_back(station_basis(model, st));
    std::vector<std::vector<cplx>> M(ns, std::vector<cplx>(ns, cplx{0, 0}));
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < ns; ++j) {
            cplx acc{0, 0};
            for (std::size_t cc = 0; cc < nc; ++cc)
                for (std::size_t dd = 0; dd < nc; ++dd)
                    acc += ch.obs[cc] * phi[i][ch.mode[cc]] * Pi[cc][dd] *
                           std::conj(ch.obs[dd] * phi[j][ch.mode[dd]]);
            M[i][j] = acc;
        }
    return M;
}

ExactScalarResult exact_scalar_formula(const DampedWaveModel& model, const NoiseSpec& spec,
                                       const std::vector<Station>& stations,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                       const std::vector<double>& taus) {
    if (model.variant != ModelVariant::first_order_scalar)
        throw std::invalid_argument("exact_scalar_formula: first-order scalar model required");
    const double t0 = spec.support_t0();
    for (double tau : taus)
        if (tau <= t0)
            throw std::invalid_argument("exact_scalar_formula: requires tau > t0");

    const CovarianceKernel K = covariance_kernel(spec, model.dec);
    if (!K.dense.empty())
        throw std::invalid_argument("exact_scalar_formula: windowed sources are not multipliers");
    const double kd = model.damping;
    const std::size_t n = model.n_modes();

    ExactScalarResult out;
    out.mode_factor.assign(n, cplx{0, 0});
    for (std::size_t k = 0; k < n; ++k) {
        // F = chi |l|^2 * DFT of Psi(t) e^{k t} evaluated with the e^{+i omega t}
        // convention, which matches the stationary operator route.
        cplx F{0, 0};
        for (long j = -K.half_lags; j <= K.half_lags; ++j) {
            const double u = static_cast<double>(j) * K.lag_dt;
            F += K.lag_dt * K.psi_at(j) * std::exp(kd * u) *
                 std::exp(cplx(0.0, model.omega[k] * u));
        }
        out.mode_factor[k] = F * K.mode_weight[k];
    }

    out.taus = taus;
    out.values.assign(pairs.size() * taus.size(), cplx{0, 0});

    std::vector<std::vector<cplx>> phi;
    for (const auto& st : stations) phi.push_back(station_basis(model, st));
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [sa, sb] = pairs[p];
        for (std::size_t it = 0; it < taus.size(); ++it) {
            cplx acc{0, 0};
            for (std::size_t k = 0; k < n; ++k) {
                if (!model.mode_active(k)) continue;
                acc += out.mode_factor[k] / (2.0 * kd) *
                       std::exp(-cplx(kd, model.omega[k]) * taus[it]) * phi[sa][k] *
                       std::conj(phi[sb][k]);
            }
            out.values[p * taus.size() + it] = acc;
        }
    }
    return out;
}

cplx white_noise_closed_form(const DampedWaveModel& model, double tau,
                             const std::vector<double>& A, const std::vector<double>& B) {
    if (model.variant != ModelVariant::second_order || !model.spectral_exact())
        throw std::invalid_argument("white_noise_closed_form: constant-damping second-order model");
    const double a = model.damping;
    if (a <= 0.0) throw std::invalid_argument("white_noise_closed_form: a > 0 required");
    const double at = std::abs(tau);
    cplx acc{0, 0};
    for (std::size_t k = 0; k < model.n_modes(); ++k) {
        const double mu = model.dec.eigenvalues[k];
        if (mu == 0.0) continue;
        const WaveKernelValue w = damped_wave_kernels(mu - a * a, at, a);
        const double modeval = (w.cos_part + a * w.sinc_part) / (4.0 * a * mu);
        acc += modeval * model.dec.basis_value(k, A) * std::conj(model.dec.basis_value(k, B));
    }
    return acc;
}

DerivativeIdentityReport derivative_green_identity(const DampedWaveModel& model,
                                                   const std::vector<double>& A,
                                                   const std::vector<double>& B,
                                                   const std::vector<double>& taus, double h) {
    DerivativeIdentityReport rep;
    const double a = model.damping;

    for (double tau : taus) {
        if (tau <= 0.0) throw std::invalid_argument("derivative identity: tau > 0 required");
        // analytic derivative, product rule on e^{-a tau}(cos + a sinc)/(4 a mu)
        cplx dC{0, 0};
        for (std::size_t k = 0; k < model.n_modes(); ++k) {
            const double mu = model.dec.eigenvalues[k];
            if (mu == 0.0) continue;
            const double q2 = mu - a * a;
            const WaveKernelValue w = damped_wave_kernels(q2, tau, a);
            // d/dt cos = -q^2 sinc, d/dt sinc = cos (damped forms carry -a)
            const double val =
                (-a * (w.cos_part + a * w.sinc_part) + (-q2 * w.sinc_part + a * w.cos_part)) /
                (4.0 * a * mu);
            dC += val * model.dec.basis_value(k, A) * std::conj(model.dec.basis_value(k, B));
        }
        const cplx rhs = -greens_function(model, tau, A, B, /*include_zero_mode=*/false) / (4.0 * a);
        rep.max_exact_residual = std::max(rep.max_exact_residual, std::abs(dC - rhs));

        auto fd = [&](double step) {
            const cplx num = (white_noise_closed_form(model, tau + step, A, B) -
                              white_noise_closed_form(model, tau - step, A, B)) /
                             (2.0 * step);
            return std::abs(num - rhs);
        };
        rep.fd_residual_h = std::max(rep.fd_residual_h, fd(h));
        rep.fd_residual_h2 = std::max(rep.fd_residual_h2, fd(h / 2.0));
    }
    rep.fitted_order = std::log2(rep.fd_residual_h / rep.fd_residual_h2);
    return rep;
}

TravelTimePick pick_travel_time(const CorrelationFunction& corr, std::size_t pair,
                                const PickOptions& opts) {
    TravelTimePick pick;
    const auto [sa, sb] = corr.pairs.at(pair);
    if (corr.stations[sa].grid_index == corr.stations[sb].grid_index) {
        pick.degenerate = true;  // zero-lag peak excluded by construction
        return pick;
    }

    const std::size_t nl = corr.n_lags();
    const std::size_t N = next_pow2(4 * nl);
    std::vector<cplx> f(N, cplx{0, 0});
    for (long j = -corr.half_lags; j <= corr.half_lags; ++j) {
        const std::size_t idx = static_cast<std::size_t>((j % static_cast<long>(N) + N) % N);
        f[idx] = corr.value(pair, j);
    }
    fft_pow2(f, -1);

    const double dw = kTwoPi / (static_cast<double>(N) * corr.lag_dt);
    const double nyquist = kPi / corr.lag_dt;
    const double lo = opts.band_lo;
    const double hi = (opts.band_hi > 0.0) ? opts.band_hi : nyquist;
    const double edge = 0.1 * (hi - lo);
    double max_mag = 0.0;
    for (auto& v : f) max_mag = std::max(max_mag, std::abs(v));

    for (std::size_t m = 0; m < N; ++m) {
        const long ms = (m <= N / 2) ? static_cast<long>(m) : static_cast<long>(m) - static_cast<long>(N);
        const double w = dw * static_cast<double>(ms);
        if (ms <= 0 || w < lo || w > hi) {  // one-sided analytic band
            f[m] = 0.0;
            continue;
        }
        double taper = 1.0;
        if (edge > 0.0) {
            if (w < lo + edge) taper = 0.5 * (1.0 - std::cos(kPi * (w - lo) / edge));
            if (w > hi - edge) taper = std::min(taper, 0.5 * (1.0 - std::cos(kPi * (hi - w) / edge)));
        }
        if (opts.whiten) {
            const double mag = std::abs(f[m]);
            f[m] = (mag > 1e-9 * max_mag) ? f[m] / mag : cplx{0, 0};
        }
        f[m] *= taper * cplx(0.0, w);  // spectral derivative
    }
    fft_pow2(f, +1);
    for (auto& v : f) v /= static_cast<double>(N);

    const long jmin = std::max<long>(1, static_cast<long>(std::ceil(opts.min_lag / corr.lag_dt)));
    double best = -1.0;
    long best_j = jmin;
    std::vector<double> mags;
    for (long j = jmin; j <= corr.half_lags; ++j) {
        const double m = std::abs(f[static_cast<std::size_t>(j)]);
        mags.push_back(m);
        if (m > best) {
            best = m;
            best_j = j;
        }
    }
    std::vector<double> sorted = mags;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double med = sorted[sorted.size() / 2];

    pick.tau_star = static_cast<double>(best_j) * corr.lag_dt;
    pick.amplitude = best;
    pick.snr = (med > 0.0) ? best / med : 0.0;
    if (pick.snr < 3.0) throw std::runtime_error("no reliable arrival");
    return pick;
}

ErgodicReport ergodic_convergence(const DampedWaveModel& model, const NoiseSpec& spec,
                                  const std::vector<double>& T_values, std::size_t realizations,
                                  double dt, const Station& A, const Station& B, double tau_star,
                                  std::size_t record_stride) {
    if (T_values.size() < 3) throw std::invalid_argument("ergodic_convergence: need >= 3 T values");
    const double span = *std::max_element(T_values.begin(), T_values.end()) /
                        *std::min_element(T_values.begin(), T_values.end());
    if (span < 16.0) throw std::invalid_argument("ergodic_convergence: T range must span >= x16");
    if (realizations < 32) throw std::invalid_argument("ergodic_convergence: need >= 32 realizations");

    ErgodicReport rep;
    rep.T_values = T_values;
    const double burn = 8.0 * model.attenuation_time();
    const double rec_dt = dt * static_cast<double>(record_stride);
    const long jlag = static_cast<long>(std::llround(tau_star / rec_dt));

    for (double T : T_values) {
        const std::size_t steps = static_cast<std::size_t>(std::ceil((T + burn) / dt));
        std::vector<cplx> estimates(realizations);
        for (std::size_t r = 0; r < realizations; ++r) {
            auto stream = make_filtered_stream(model.dec, spec, dt, r);
            CausalSolveOptions opts;
            opts.record_stride = record_stride;
            FieldTrajectory traj = causal_solve(model, *stream, dt, steps, {A, B}, opts);
            const std::size_t w0 = traj.burn_in_samples;
            const std::size_t Nw = traj.samples - w0;
            cplx acc{0, 0};
            std::size_t cnt = 0;
            const auto& ua = traj.series[0][0];
            const auto& ub = traj.series[1][0];
            for (std::size_t nn = w0 + static_cast<std::size_t>(std::max<long>(jlag, 0)); nn < w0 + Nw;
                 ++nn) {
                const long mref = static_cast<long>(nn) - jlag;
                if (mref < static_cast<long>(w0)) continue;
                acc += ua[nn] * std::conj(ub[static_cast<std::size_t>(mref)]);
                ++cnt;
            }
            estimates[r] = acc / static_cast<double>(cnt);
        }
        cplx mean{0, 0};
        for (const auto& e : estimates) mean += e;
        mean /= static_cast<double>(realizations);
        double var = 0.0;
        for (const auto& e : estimates) var += std::norm(e - mean);
        var /= static_cast<double>(realizations - 1);
        rep.variances.push_back(var);
        if (var < 1e-28 * (std::norm(mean) + 1e-300)) rep.degenerate = true;
    }
    if (rep.degenerate) return rep;

    // least squares slope of log var vs log T with standard error
    const std::size_t m = T_values.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double x = std::log(T_values[i]);
        const double y = std::log(rep.variances[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = static_cast<double>(m) * sxx - sx * sx;
    rep.slope = (static_cast<double>(m) * sxy - sx * sy) / denom;
    // each log-variance point carries sd sqrt(2/(R-1)) (chi-square statistics
    // of an R-sample variance), so the slope error is analytic
    const double sd_point = std::sqrt(2.0 / static_cast<double>(realizations - 1));
    rep.slope_stderr = sd_point / std::sqrt(sxx - sx * sx / static_cast<double>(m));
    return rep;
}

CrossBranchResult cross_branch_correlation(const BranchSystem& branches, const NoiseSpec& spec,
                                           const Station& A, const Station& B,
                                           const CrossBranchOptions& opts) {
    const DampedWaveModel& model = branches.model;
    const auto& domain = model.dec.domain;
    if (spec.spatial_window.empty())
        throw std::invalid_argument("cross_branch: spec must carry a spatial window");
    // exclusion radius: distance from B to the nearest point where the window
    // is non-negligible
    const double L = domain.extent[0];
    double excl = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < domain.size(); ++j) {
        if (std::abs(spec.spatial_window[j]) < 1e-12) continue;
        const double x = domain.point(j)[0];
        double d = std::abs(x - B.position[0]);
        d = std::min(d, L - d);
        excl = std::min(excl, d);
    }
    const double h = L / static_cast<double>(domain.size());
    if (excl < 4.0 * spec.epsilon)
        throw std::invalid_argument("cross_branch: window must exclude a radius >= 4 eps around B");
    if (excl < 4.0 * h)
        throw std::invalid_argument("cross_branch: exclusion radius under-resolved by the grid");

    CrossBranchResult res;
    if (!opts.empirical) {
        const CovarianceKernel K = covariance_kernel(spec, model.dec);
        TheoryOptions topt;
        topt.branch_resolved = true;
        res.corr = theoretical_correlation(model, K, {A, B}, {{0, 1}}, opts.lag_dt, opts.half_lags,
                                           topt);
        double mx_cross = 0.0, mx_diag = 0.0;
        for (long j = 1; j <= res.corr.half_lags; ++j) {
            mx_cross = std::max(mx_cross, std::abs(res.corr.value(0, j, 0, 1)));
            mx_diag = std::max(mx_diag, std::abs(res.corr.value(0, j, 0, 0)));
        }
        res.ratio = mx_cross / mx_diag;
        return res;
    }

    // empirical ensemble of branch-resolved correlations
    const std::size_t stride = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(opts.lag_dt / opts.dt)));
    const double burn = 8.0 * model.attenuation_time();
    const std::size_t steps = static_cast<std::size_t>(std::ceil((opts.T + burn) / opts.dt));
    std::vector<double> ratios(opts.realizations);
    std::vector<FieldTrajectory> trajs;
    for (std::size_t r = 0; r < opts.realizations; ++r) {
        auto stream = make_filtered_stream(model.dec, spec, opts.dt, r);
        CausalSolveOptions copt;
        copt.record_stride = stride;
        copt.record_branches = true;
        FieldTrajectory traj = causal_solve(model, *stream, opts.dt, steps, {A, B}, copt);
        EmpiricalOptions eopt;
        eopt.window_start = traj.burn_in_samples;
        eopt.all_components = true;
        const auto c = empirical_correlation(traj, {{0, 1}}, opts.half_lags, eopt);
        double mx_cross = 0.0, mx_diag = 0.0;
        for (long j = 1; j <= c.half_lags; ++j) {
            mx_cross = std::max(mx_cross, std::abs(c.value(0, j, 0, 1)));
            mx_diag = std::max(mx_diag, std::abs(c.value(0, j, 0, 0)));
        }
        ratios[r] = mx_cross / mx_diag;
        trajs.push_back(std::move(traj));
    }
    EmpiricalOptions eopt;
    eopt.window_start = trajs.front().burn_in_samples;
    eopt.all_components = true;
    res.corr = empirical_correlation_ensemble(trajs, {{0, 1}}, opts.half_lags, eopt);
    double mean = 0.0;
    for (double r : ratios) mean += r;
    mean /= static_cast<double>(opts.realizations);
    double var = 0.0;
    for (double r : ratios) var += (r - mean) * (r - mean);
    res.ratio = mean;
    res.ratio_sigma = opts.realizations > 1
                          ? std::sqrt(var / static_cast<double>(opts.realizations - 1) /
                                      static_cast<double>(opts.realizations))
                          : 0.0;
    return res;
}

}  // namespace corrlab
