#include "corrlab/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "corrlab/wave_kernels.hpp"
#include "json.hpp"

namespace corrlab {

double DampedWaveModel::decay_rate_floor() const {
    switch (variant) {
        case ModelVariant::first_order_scalar:
            return damping;
        case ModelVariant::second_order:
        case ModelVariant::two_component: {
            const double a = damping_grid.empty()
                                 ? damping
                                 : *std::min_element(damping_grid.begin(), damping_grid.end());
            double rate = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < dec.n_modes(); ++k) {
                if (!mode_active(k)) continue;
                const double mu = dec.eigenvalues[k];
                const double r = (mu >= a * a) ? a : a - std::sqrt(a * a - mu);
                rate = std::min(rate, r);
            }
            if (!std::isfinite(rate)) rate = a;
            if (rate <= 0.0)
                throw std::domain_error("model has a non-decaying mode; no attenuation time");
            return rate;
        }
    }
    return damping;
}

std::string DampedWaveModel::hash() const {
    // FNV-1a over the defining numbers; stable across runs for manifests.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](double v) {
        std::uint64_t b;
        static_assert(sizeof(b) == sizeof(v));
        std::memcpy(&b, &v, sizeof(b));
        for (int i = 0; i < 8; ++i) {
            h ^= (b >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(static_cast<double>(static_cast<int>(variant)));
    mix(epsilon);
    mix(damping);
    mix(omit_zero_mode ? 1.0 : 0.0);
    for (double mu : dec.eigenvalues) mix(mu);
    for (double w : omega) mix(w);
    for (double a : damping_grid) mix(a);
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

DampedWaveModel DampedWaveModel::first_order(const SpectralDecomposition& dec,
                                             const std::function<double(double)>& h0_of_xi,
                                             double epsilon, double k_damping) {
    if (k_damping <= 0.0) throw std::invalid_argument("first_order: damping must be > 0");
    DampedWaveModel m;
    m.variant = ModelVariant::first_order_scalar;
    m.dec = dec;
    m.epsilon = epsilon;
    m.damping = k_damping;
    m.omega.resize(dec.n_modes());
    const double L = dec.domain.extent[0];
    for (std::size_t k = 0; k < dec.n_modes(); ++k) {
        double kappa;
        if (dec.domain.kind == DomainKind::interval_neumann_1d)
            kappa = static_cast<double>(dec.wavevectors[k][0]) * kPi / L;
        else if (dec.domain.kind == DomainKind::circle_1d)
            kappa = kTwoPi * static_cast<double>(dec.wavevectors[k][0]) / L;
        else
            throw std::invalid_argument("first_order: 1D domains only");
        m.omega[k] = h0_of_xi(epsilon * kappa) / epsilon;
    }
    return m;
}

DampedWaveModel DampedWaveModel::second_order(const SpectralDecomposition& dec, double a,
                                              bool omit_zero_mode) {
    if (a <= 0.0) throw std::invalid_argument("second_order: damping must be > 0");
    DampedWaveModel m;
    m.variant = ModelVariant::second_order;
    m.dec = dec;
    m.damping = a;
    m.omit_zero_mode = omit_zero_mode;
    return m;
}

DampedWaveModel DampedWaveModel::second_order_variable(const SpectralDecomposition& dec,
                                                       const std::vector<double>& a_grid) {
    if (a_grid.size() != dec.domain.size())
        throw std::invalid_argument("second_order_variable: damping grid size mismatch");
    const double amin = *std::min_element(a_grid.begin(), a_grid.end());
    if (amin <= 0.0) throw std::invalid_argument("second_order_variable: damping must be > 0");
    DampedWaveModel m;
    m.variant = ModelVariant::second_order;
    m.dec = dec;
    m.damping_grid = a_grid;
    m.damping = amin;
    m.omit_zero_mode = true;
    return m;
}

ModeState ModeState::zero(const DampedWaveModel& m) {
    ModeState s;
    s.variant = m.variant;
    s.comp_a.assign(m.n_modes(), cplx{0.0, 0.0});
    if (m.variant != ModelVariant::first_order_scalar)
        s.comp_b.assign(m.n_modes(), cplx{0.0, 0.0});
    return s;
}

Mode2x2 second_order_mode_propagator(double mu, double a, double t) {
    const WaveKernelValue k = damped_wave_kernels(mu - a * a, t, a);
    const double dc = k.cos_part, ds = k.sinc_part;
    return {cplx(dc + a * ds, 0.0), cplx(ds, 0.0), cplx(-mu * ds, 0.0), cplx(dc - a * ds, 0.0)};
}

Mode2x2 two_component_mode_propagator(double mu, double a, double t) {
    // exp(-it H_k / eps) = e^{-at} (cos(qt) I - i sinc(qt) B'),
    // B' = [[ia, -sqrt(mu)], [-sqrt(mu), -ia]], q^2 = mu - a^2.
    const WaveKernelValue k = damped_wave_kernels(mu - a * a, t, a);
    const double dc = k.cos_part, ds = k.sinc_part;
    const double rootmu = std::sqrt(mu);
    return {cplx(dc + a * ds, 0.0), cplx(0.0, rootmu * ds), cplx(0.0, rootmu * ds),
            cplx(dc - a * ds, 0.0)};
}

namespace {

void strang_variable_step(const DampedWaveModel& m, std::vector<cplx>& v, std::vector<cplx>& vt,
                          double dt) {
    // half damping in grid space, full undamped wave step in mode space,
    // half damping again
    const auto& dec = m.dec;
    Field g = dec.to_grid(vt);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= std::exp(-m.damping_grid[i] * dt);
    vt = dec.to_modes(g);
    for (std::size_t k = 0; k < m.n_modes(); ++k) {
        const double mu = dec.eigenvalues[k];
        const WaveKernelValue w = wave_kernels(mu, dt);
        const cplx nv = w.cos_part * v[k] + w.sinc_part * vt[k];
        const cplx nvt = -mu * w.sinc_part * v[k] + w.cos_part * vt[k];
        v[k] = nv;
        vt[k] = nvt;
    }
    g = dec.to_grid(vt);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= std::exp(-m.damping_grid[i] * dt);
    vt = dec.to_modes(g);
}

}  // namespace

ModeState evolve(const DampedWaveModel& model, const ModeState& state, double t) {
    if (t < 0.0) throw std::invalid_argument("evolve: semigroup only, t must be >= 0");
    ModeState out = state;
    const std::size_t n = model.n_modes();

    if (model.variant == ModelVariant::first_order_scalar) {
        for (std::size_t k = 0; k < n; ++k) {
            const cplx factor = std::exp(cplx(-model.damping * t, -model.omega[k] * t));
            out.comp_a[k] *= factor;
        }
        return out;
    }

    if (!model.damping_grid.empty()) {
        // Strang splitting; damping exponent per substep kept small.
        const double amax = *std::max_element(model.damping_grid.begin(), model.damping_grid.end());
        const double dt_max = 0.1 / (2.0 * amax);
        const std::size_t nsub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t / dt_max)));
        const double dt = t / static_cast<double>(nsub);
        for (std::size_t s = 0; s < nsub; ++s) strang_variable_step(model, out.comp_a, out.comp_b, dt);
        return out;
    }

    for (std::size_t k = 0; k < n; ++k) {
        const double mu = model.dec.eigenvalues[k];
        const Mode2x2 E = (model.variant == ModelVariant::second_order)
                              ? second_order_mode_propagator(mu, model.damping, t)
                              : two_component_mode_propagator(mu, model.damping, t);
        const cplx a = out.comp_a[k], b = out.comp_b[k];
        out.comp_a[k] = E.m11 * a + E.m12 * b;
        out.comp_b[k] = E.m21 * a + E.m22 * b;
    }
    return out;
}

Station station_at(const DiscreteDomain& domain, std::size_t grid_index) {
    if (grid_index >= domain.size()) throw std::invalid_argument("station index out of range");
    return {grid_index, domain.point(grid_index)};
}

std::size_t nearest_grid_index(const DiscreteDomain& domain, const std::vector<double>& x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < domain.size(); ++j) {
        const auto p = domain.point(j);
        double d = 0.0;
        for (std::size_t a = 0; a < p.size(); ++a) {
            double delta = std::abs(p[a] - x[a]);
            if (domain.kind != DomainKind::interval_neumann_1d)
                delta = std::min(delta, domain.extent[a] - delta);
            d += delta * delta;
        }
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

FieldTrajectory causal_solve(const DampedWaveModel& model, SourceStream& source, double dt,
                             std::size_t steps, const std::vector<Station>& stations,
                             const CausalSolveOptions& opts) {
    if (dt <= 0.0) throw std::invalid_argument("causal_solve: dt must be > 0");
    if (source.n_modes() != model.n_modes())
        throw std::invalid_argument("causal_solve: source/model mode count mismatch");
    if (!model.spectral_exact())
        throw std::invalid_argument("causal_solve: variable damping not supported here");

    const bool need_t_att = opts.require_stationary || opts.burn_in_time < 0.0;
    const double t_att = need_t_att ? model.attenuation_time() : 0.0;
    double burn_t = opts.burn_in_time >= 0.0 ? opts.burn_in_time : 8.0 * t_att;
    const std::size_t burn_steps = static_cast<std::size_t>(std::ceil(burn_t / dt));
    if (burn_steps >= steps) throw std::invalid_argument("causal_solve: trajectory shorter than burn-in");
    if (opts.require_stationary && burn_t < 5.0 * t_att)
        throw std::invalid_argument("causal_solve: burn-in below 5 attenuation times; not stationary");

    const std::size_t n = model.n_modes();
    const bool scalar = model.variant == ModelVariant::first_order_scalar;
    const bool branches = opts.record_branches && model.variant == ModelVariant::two_component;

    // mode propagators for dt and dt/2
    std::vector<cplx> f_full(n), f_half(n);
    std::vector<Mode2x2> E_full(n), E_half(n);
    if (scalar) {
        for (std::size_t k = 0; k < n; ++k) {
            f_full[k] = std::exp(cplx(-model.damping * dt, -model.omega[k] * dt));
            f_half[k] = std::exp(cplx(-model.damping * dt / 2, -model.omega[k] * dt / 2));
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) {
            const double mu = model.dec.eigenvalues[k];
            if (model.variant == ModelVariant::second_order) {
                E_full[k] = second_order_mode_propagator(mu, model.damping, dt);
                E_half[k] = second_order_mode_propagator(mu, model.damping, dt / 2);
            } else {
                E_full[k] = two_component_mode_propagator(mu, model.damping, dt);
                E_half[k] = two_component_mode_propagator(mu, model.damping, dt / 2);
            }
        }
    }

    // station basis table
    const std::size_t ns = stations.size();
    std::vector<std::vector<cplx>> phi(ns, std::vector<cplx>(n));
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t k = 0; k < n; ++k)
            phi[s][k] = model.dec.basis_value(k, stations[s].position);

    BranchSystem bsys;
    if (branches) {
        DampedWaveModel so = model;
        so.variant = ModelVariant::second_order;
        bsys = two_component_reduce(so);
    }

    FieldTrajectory traj;
    traj.dt = dt * static_cast<double>(opts.record_stride);
    traj.stations = stations;
    traj.n_comp = branches ? 2 : ((opts.record_second_component && !scalar) ? 2 : 1);
    traj.burn_in_samples = burn_steps / opts.record_stride;
    traj.snapshot_stride = opts.snapshot_stride;
    const std::size_t nsamp = steps / opts.record_stride;
    traj.samples = nsamp;
    traj.series.assign(ns, std::vector<std::vector<cplx>>(traj.n_comp, std::vector<cplx>(nsamp)));

    std::vector<cplx> ua(n, cplx{0, 0}), ub(n, cplx{0, 0}), fmode;
    std::size_t isamp = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        // advance state by dt, then add the half-step-propagated forcing
        source.next(fmode);
        if (scalar) {
            for (std::size_t k = 0; k < n; ++k) {
                cplx f = model.mode_active(k) ? fmode[k] : cplx{0, 0};
                ua[k] = f_full[k] * ua[k] + f_half[k] * f * dt;
            }
        } else if (model.variant == ModelVariant::second_order) {
            for (std::size_t k = 0; k < n; ++k) {
                const cplx f = model.mode_active(k) ? fmode[k] : cplx{0, 0};
                const cplx a = ua[k], b = ub[k];
                ua[k] = E_full[k].m11 * a + E_full[k].m12 * b + E_half[k].m12 * f * dt;
                ub[k] = E_full[k].m21 * a + E_full[k].m22 * b + E_half[k].m22 * f * dt;
            }
        } else {
            // forcing vector (0, -i eps f)
            for (std::size_t k = 0; k < n; ++k) {
                const cplx f = model.mode_active(k) ? fmode[k] : cplx{0, 0};
                const cplx g = cplx(0.0, -model.epsilon) * f;
                const cplx a = ua[k], b = ub[k];
                ua[k] = E_full[k].m11 * a + E_full[k].m12 * b + E_half[k].m12 * g * dt;
                ub[k] = E_full[k].m21 * a + E_full[k].m22 * b + E_half[k].m22 * g * dt;
            }
        }

        if ((step + 1) % opts.record_stride == 0 && isamp < nsamp) {
            for (std::size_t s = 0; s < ns; ++s) {
                if (branches) {
                    cplx b0{0, 0}, b1{0, 0};
                    for (std::size_t k = 0; k < n; ++k) {
                        if (!model.mode_active(k)) continue;
                        const auto& w = bsys.Vinv[k];
                        b0 += (w[0][0] * ua[k] + w[0][1] * ub[k]) * phi[s][k];
                        b1 += (w[1][0] * ua[k] + w[1][1] * ub[k]) * phi[s][k];
                    }
                    traj.series[s][0][isamp] = b0;
                    traj.series[s][1][isamp] = b1;
                } else {
                    cplx va{0, 0};
                    for (std::size_t k = 0; k < n; ++k)
                        if (model.mode_active(k)) va += ua[k] * phi[s][k];
                    traj.series[s][0][isamp] = va;
                    if (traj.n_comp == 2) {
                        cplx vb{0, 0};
                        for (std::size_t k = 0; k < n; ++k)
                            if (model.mode_active(k)) vb += ub[k] * phi[s][k];
                        traj.series[s][1][isamp] = vb;
                    }
                }
            }
            ++isamp;
        }
        if (opts.snapshot_stride > 0 && (step + 1) % opts.snapshot_stride == 0)
            traj.snapshots.push_back(model.dec.to_grid(ua));
    }
    return traj;
}

FieldTrajectory causal_solve(const DampedWaveModel& model, const SourceTrajectory& source,
                             const std::vector<Station>& stations, const CausalSolveOptions& opts) {
    auto stream = make_materialized_stream(source);
    return causal_solve(model, *stream, source.dt, source.steps, stations, opts);
}

cplx greens_function(const DampedWaveModel& model, double t, const std::vector<double>& A,
                     const std::vector<double>& B, bool include_zero_mode) {
    if (model.variant != ModelVariant::second_order || !model.spectral_exact())
        throw std::invalid_argument("greens_function: constant-damping second-order model required");
    if (t <= 0.0) return {0.0, 0.0};
    const double a = model.damping;
    cplx sum{0.0, 0.0};
    for (std::size_t k = 0; k < model.n_modes(); ++k) {
        const double mu = model.dec.eigenvalues[k];
        if (mu == 0.0 && !include_zero_mode) continue;
        const WaveKernelValue w = damped_wave_kernels(mu - a * a, t, a);
        sum += w.sinc_part * model.dec.basis_value(k, A) * std::conj(model.dec.basis_value(k, B));
    }
    return sum;
}

AttenuationReport attenuation_check(const DampedWaveModel& model, double horizon,
                                    const ModeState* state) {
    const double t_att = model.attenuation_time();
    if (horizon < 3.0 * t_att)
        throw std::invalid_argument("attenuation_check: horizon must be >= 3 attenuation times");

    AttenuationReport rep;
    rep.attenuation_time = t_att;

    const int npts = 33;
    std::vector<double> ts(npts), logs(npts);
    bool degenerate = false;
    for (int i = 0; i < npts; ++i) {
        const double t = horizon * static_cast<double>(i + 1) / npts;
        double proxy = 0.0;
        if (state) {
            ModeState st = evolve(model, *state, t);
            double nrm = 0.0;
            for (const auto& v : st.comp_a) nrm += std::norm(v);
            for (const auto& v : st.comp_b) nrm += std::norm(v);
            proxy = std::sqrt(nrm);
        } else {
            // max modal branch amplification
            for (std::size_t k = 0; k < model.n_modes(); ++k) {
                if (!model.mode_active(k)) continue;
                if (model.variant == ModelVariant::first_order_scalar) {
                    proxy = std::max(proxy, std::exp(-model.damping * t));
                } else {
                    const double mu = model.dec.eigenvalues[k];
                    const double a = model.damping;
                    double rate = (mu >= a * a) ? a : a - std::sqrt(a * a - mu);
                    proxy = std::max(proxy, std::exp(-rate * t));
                }
            }
        }
        if (proxy <= 0.0) {
            degenerate = true;
            break;
        }
        ts[i] = t;
        logs[i] = std::log(proxy);
    }
    if (degenerate) {
        rep.degenerate = true;
        return rep;
    }
    // least-squares line log(proxy) = log C - rate * t
    double st = 0, sl = 0, stt = 0, stl = 0;
    for (int i = 0; i < npts; ++i) {
        st += ts[i];
        sl += logs[i];
        stt += ts[i] * ts[i];
        stl += ts[i] * logs[i];
    }
    const double denom = npts * stt - st * st;
    rep.fitted_rate = -(npts * stl - st * sl) / denom;
    rep.prefactor_C = std::exp((sl * stt - st * stl) / denom);
    return rep;
}

std::array<std::array<cplx, 2>, 2> BranchSystem::unitary_basis(std::size_t) const {
    const double s = 1.0 / std::sqrt(2.0);
    return {{{cplx(s, 0), cplx(-s, 0)}, {cplx(s, 0), cplx(s, 0)}}};
}

std::array<std::array<cplx, 2>, 2> BranchSystem::projector(std::size_t mode, int branch) const {
    std::array<std::array<cplx, 2>, 2> P;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) P[i][j] = V[mode][i][branch] * Vinv[mode][branch][j];
    return P;
}

BranchSystem two_component_reduce(const DampedWaveModel& m) {
    if (m.variant != ModelVariant::second_order)
        throw std::invalid_argument("two_component_reduce: second-order model required");
    if (!m.spectral_exact())
        throw std::invalid_argument("two_component_reduce: variable damping is not block-diagonalizable here");

    BranchSystem bs;
    bs.model = m;
    bs.model.variant = ModelVariant::two_component;
    const double a = m.damping;
    const std::size_t n = m.n_modes();
    bs.lambda.resize(n);
    bs.V.resize(n);
    bs.Vinv.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double mu = m.dec.eigenvalues[k];
        const double rootmu = std::sqrt(mu);
        if (mu == 0.0) {
            // 1D blocks: H/eps = diag(0, -2ia)
            bs.lambda[k] = {cplx(0, 0), cplx(0, -2 * a)};
            bs.V[k] = {{{cplx(1, 0), cplx(0, 0)}, {cplx(0, 0), cplx(1, 0)}}};
            bs.Vinv[k] = bs.V[k];
            continue;
        }
        // H/eps = [[0, -r],[-r, -2ia]], eigenvalues -ia +- q, q = sqrt(mu - a^2)
        const cplx q = std::sqrt(cplx(mu - a * a, 0.0));
        const cplx lp = -cplx(0, a) + q;
        const cplx lm = -cplx(0, a) - q;
        bs.lambda[k] = {lp, lm};
        // eigenvector for lambda: (1, -lambda/r)
        const cplx vp2 = -lp / rootmu;
        const cplx vm2 = -lm / rootmu;
        // columns (1, vp2), (1, vm2); normalize columns to unit Euclidean norm
        const double np = std::sqrt(1.0 + std::norm(vp2));
        const double nm = std::sqrt(1.0 + std::norm(vm2));
        bs.V[k] = {{{cplx(1.0 / np, 0), cplx(1.0 / nm, 0)}, {vp2 / np, vm2 / nm}}};
        // inverse of 2x2
        const cplx det = bs.V[k][0][0] * bs.V[k][1][1] - bs.V[k][0][1] * bs.V[k][1][0];
        bs.Vinv[k] = {{{bs.V[k][1][1] / det, -bs.V[k][0][1] / det},
                       {-bs.V[k][1][0] / det, bs.V[k][0][0] / det}}};
    }
    return bs;
}

void FieldTrajectory::export_binary(const std::string& path_bin, const std::string& path_manifest,
                                    std::uint64_t seed, const std::string& model_hash) const {
    std::ofstream f(path_bin, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path_bin);
    for (const auto& st : series)
        for (const auto& comp : st)
            f.write(reinterpret_cast<const char*>(comp.data()),
                    static_cast<std::streamsize>(comp.size() * sizeof(cplx)));

    nlohmann::json j;
    j["dt"] = dt;
    j["samples"] = samples;
    j["burn_in_samples"] = burn_in_samples;
    j["n_comp"] = n_comp;
    std::vector<std::size_t> idx;
    for (const auto& s : stations) idx.push_back(s.grid_index);
    j["stations"] = idx;
    j["seed"] = seed;
    j["model_hash"] = model_hash;
    j["layout"] = "complex128 [station][component][sample]";
    std::ofstream man(path_manifest);
    if (!man) throw std::runtime_error("cannot open " + path_manifest);
    man << j.dump(2) << "\n";
}

}  // namespace corrlab
