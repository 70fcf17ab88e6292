#include <array>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "corrlab/correlation.hpp"
#include "corrlab/noise.hpp"
#include "corrlab/propagation.hpp"
#include "corrlab/spectral.hpp"
#include "doctest.h"

using namespace corrlab;

namespace {

using M2 = std::array<cplx, 4>;  // row-major 2x2

M2 mul(const M2& a, const M2& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3]};
}

// scaling-and-squaring Taylor exponential; independent of the library path
M2 expm(const M2& a, double t) {
    M2 x{a[0] * t, a[1] * t, a[2] * t, a[3] * t};
    double nrm = 0.0;
    for (const auto& v : x) nrm = std::max(nrm, std::abs(v));
    int s = 0;
    while (nrm > 0.25) {
        nrm /= 2.0;
        ++s;
    }
    const double sc = std::ldexp(1.0, -s);
    for (auto& v : x) v *= sc;
    M2 sum{1.0, 0.0, 0.0, 1.0};
    M2 term{1.0, 0.0, 0.0, 1.0};
    for (int k = 1; k <= 24; ++k) {
        term = mul(term, x);
        for (auto& v : term) v /= static_cast<double>(k);
        for (int i = 0; i < 4; ++i) sum[i] += term[i];
    }
    for (int i = 0; i < s; ++i) sum = mul(sum, sum);
    return sum;
}

double dist(const M2& a, const Mode2x2& b) {
    return std::max({std::abs(a[0] - b.m11), std::abs(a[1] - b.m12), std::abs(a[2] - b.m21),
                     std::abs(a[3] - b.m22)});
}

}  // namespace

TEST_CASE("evolve: identity at t = 0 and semigroup-only guard") {
    const auto dec = build_laplacian(DiscreteDomain::circle(5));
    const auto model = DampedWaveModel::second_order(dec, 0.5);
    auto st = ModeState::zero(model);
    st.comp_a[1] = cplx(0.3, -0.2);
    st.comp_b[2] = cplx(1.0, 0.5);
    const auto out = evolve(model, st, 0.0);
    CHECK(out.comp_a[1] == st.comp_a[1]);
    CHECK(out.comp_b[2] == st.comp_b[2]);
    CHECK_THROWS(evolve(model, st, -0.1));
}

TEST_CASE("first-order mode factor") {
    const auto dec = build_laplacian(DiscreteDomain::circle(5));
    const auto model =
        DampedWaveModel::first_order(dec, [](double xi) { return xi * xi; }, 1.0, 0.5);
    auto st = ModeState::zero(model);
    // locate mode k = +1
    std::size_t k1 = 0;
    for (std::size_t k = 0; k < 5; ++k)
        if (dec.wavevectors[k][0] == 1) k1 = k;
    st.comp_a[k1] = 1.0;
    const auto out = evolve(model, st, 2.0);
    const cplx want = std::exp(cplx(-1.0, -2.0));  // e^{-2i - 1}
    CHECK(std::abs(out.comp_a[k1] - want) < 1e-14);
}

TEST_CASE("second-order mode propagator matches the matrix exponential oracle") {
    for (double mu : {4.0, 1.0, 0.09, 0.0}) {
        const double a = 0.5;
        const M2 companion{0.0, 1.0, -mu, -2.0 * a};
        for (double t : {0.3, 1.0, 2.7}) {
            const auto E = second_order_mode_propagator(mu, a, t);
            CHECK(dist(expm(companion, t), E) < 1e-10);
        }
    }
}

TEST_CASE("two-component mode propagator matches its matrix exponential") {
    for (double mu : {4.0, 1.0, 0.04}) {
        const double a = 0.5;
        const double r = std::sqrt(mu);
        // -i H_k / eps = -i [[0, -r], [-r, -2ia]]
        const M2 gen{cplx(0, 0), cplx(0, 1) * r, cplx(0, 1) * r, cplx(-2.0 * a, 0)};
        for (double t : {0.4, 1.3}) {
            const auto E = two_component_mode_propagator(mu, a, t);
            CHECK(dist(expm(gen, t), E) < 1e-10);
        }
    }
}

TEST_CASE("group law holds to 1e-10 across a time grid") {
    const auto dec = build_laplacian(DiscreteDomain::circle(9));
    const auto model = DampedWaveModel::second_order(dec, 0.7);
    for (double t : {0.2, 1.1})
        for (double s : {0.5, 2.3})
            for (std::size_t k = 0; k < dec.n_modes(); ++k) {
                const double mu = dec.eigenvalues[k];
                const auto Ets = second_order_mode_propagator(mu, 0.7, t + s);
                const auto Et = second_order_mode_propagator(mu, 0.7, t);
                const auto Es = second_order_mode_propagator(mu, 0.7, s);
                const M2 prod = mul({Et.m11, Et.m12, Et.m21, Et.m22}, {Es.m11, Es.m12, Es.m21, Es.m22});
                CHECK(dist(prod, Ets) < 1e-10);
            }
}

TEST_CASE("causal solve: zero source gives zero field") {
    const auto dec = build_laplacian(DiscreteDomain::circle(7));
    const auto model = DampedWaveModel::second_order(dec, 0.5);
    SourceTrajectory zero;
    zero.dt = 0.05;
    zero.steps = 400;
    zero.dec = dec;
    zero.mode_values.assign(zero.steps, std::vector<cplx>(7, cplx{0, 0}));
    const auto traj = causal_solve(model, zero, {station_at(dec.domain, 0)});
    for (const auto& v : traj.series[0][0]) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("impulse arrival at the station distance (finite speed)") {
    const std::size_t n = 65;
    const auto dec = build_laplacian(DiscreteDomain::circle(n));
    // the full operator (zero mode kept): pre-arrival baseline stays zero
    const auto model = DampedWaveModel::second_order(dec, 0.5, /*omit_zero_mode=*/false);
    const double dt = 0.01;
    const double d = kPi / 2.0;

    SourceTrajectory imp;
    imp.dt = dt;
    imp.steps = 400;
    imp.dec = dec;
    imp.mode_values.assign(imp.steps, std::vector<cplx>(n, cplx{0, 0}));
    // delta at x = 0, t = 0: unit mode loading of the source point
    for (std::size_t k = 0; k < n; ++k)
        imp.mode_values[0][k] = std::conj(dec.basis_value(k, {0.0})) / dt;

    const Station stB = station_at(dec.domain, nearest_grid_index(dec.domain, {d}));
    CausalSolveOptions opts;
    opts.require_stationary = false;
    opts.burn_in_time = 0.0;
    const auto traj = causal_solve(model, imp, {stB}, opts);

    auto arrival = [&](auto value_at, std::size_t count) {
        double peak = 0.0;
        for (std::size_t i = 0; i < count; ++i) peak = std::max(peak, std::abs(value_at(i)));
        for (std::size_t i = 0; i < count; ++i)
            if (std::abs(value_at(i)) > 0.05 * peak) return static_cast<double>(i) * dt;
        return 0.0;
    };
    const double t_sim =
        arrival([&](std::size_t i) { return traj.series[0][0][i]; }, traj.samples);
    const double t_green = arrival(
        [&](std::size_t i) {
            return greens_function(model, static_cast<double>(i) * dt, stB.position, {0.0});
        },
        imp.steps);
    CHECK(std::abs(t_sim - t_green) <= 3.0 * dt);
    CHECK(std::abs(t_sim - stB.position[0]) < 0.25);  // unit speed arrival
}

TEST_CASE("first-order steady state under constant forcing") {
    const auto dec = build_laplacian(DiscreteDomain::circle(5));
    const double kd = 0.8;
    const auto model = DampedWaveModel::first_order(dec, [](double xi) { return xi; }, 1.0, kd);
    const double dt = 1.2e-4;
    const std::size_t steps = 340000;  // ~32 attenuation times: transient below 1e-11

    SourceTrajectory f;
    f.dt = dt;
    f.steps = steps;
    f.dec = dec;
    std::vector<cplx> fk(5);
    for (std::size_t k = 0; k < 5; ++k) fk[k] = cplx(0.4 + 0.1 * k, 0.2);
    f.mode_values.assign(steps, fk);

    CausalSolveOptions opts;
    opts.require_stationary = false;
    opts.burn_in_time = 0.0;
    const auto traj = causal_solve(model, f, {station_at(dec.domain, 0)}, opts);
    // mode-wise fixed point u = f / (k + i omega)
    auto stream = make_materialized_stream(f);
    (void)stream;
    // reconstruct final-state modes by a direct march (evolve + inject)
    auto st = ModeState::zero(model);
    for (std::size_t t = 0; t < steps; ++t) {
        st = evolve(model, st, dt);
        for (std::size_t k = 0; k < 5; ++k)
            st.comp_a[k] +=
                std::exp(cplx(-kd * dt / 2, -model.omega[k] * dt / 2)) * fk[k] * dt;
    }
    for (std::size_t k = 0; k < 5; ++k) {
        const cplx want = fk[k] / cplx(kd, model.omega[k]);
        CHECK(std::abs(st.comp_a[k] - want) < 1e-8 * std::abs(want) + 1e-10);
    }
}

TEST_CASE("greens function: causality, short-time projector limit, oracle value") {
    const auto dec = build_laplacian(DiscreteDomain::circle(5));
    const auto model = DampedWaveModel::second_order(dec, 0.5);
    CHECK(greens_function(model, -1.0, {0.0}, {0.0}) == cplx{0, 0});
    CHECK(greens_function(model, 0.0, {0.0}, {0.0}) == cplx{0, 0});

    // G/t -> sum_k e_k(A) conj(e_k(B)) = n / L at A = B
    const double t = 1e-8;
    const cplx lim = greens_function(model, t, {0.0}, {0.0}) / t;
    CHECK(std::abs(lim - cplx(5.0 / kTwoPi, 0.0)) < 1e-6);

    // dense companion oracle at t = 1
    cplx oracle{0, 0};
    for (std::size_t k = 0; k < 5; ++k) {
        const double mu = dec.eigenvalues[k];
        const M2 companion{0.0, 1.0, -mu, -1.0};
        const M2 E = expm(companion, 1.0);
        oracle += E[1] * dec.basis_value(k, {0.0}) * std::conj(dec.basis_value(k, {0.0}));
    }
    CHECK(std::abs(greens_function(model, 1.0, {0.0}, {0.0}) - oracle) < 1e-10);
}

TEST_CASE("attenuation: exact rates and the degenerate flag") {
    const auto dec = build_laplacian(DiscreteDomain::circle(9));
    const auto first = DampedWaveModel::first_order(dec, [](double xi) { return xi; }, 1.0, 0.4);
    const auto r1 = attenuation_check(first, 10.0);
    CHECK(r1.fitted_rate == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(r1.fitted_rate >= 1.0 / first.attenuation_time() - 1e-6);

    const auto second = DampedWaveModel::second_order(dec, 0.3);
    const auto r2 = attenuation_check(second, 15.0);
    CHECK(r2.fitted_rate == doctest::Approx(0.3).epsilon(1e-9));

    auto zero = ModeState::zero(second);
    const auto r3 = attenuation_check(second, 15.0, &zero);
    CHECK(r3.degenerate);
}

TEST_CASE("two-component reduction: branch data and equivalence") {
    const auto dec = build_laplacian(DiscreteDomain::circle(9));
    const double a = 0.5;
    const auto so = DampedWaveModel::second_order(dec, a);
    const auto bs = two_component_reduce(so);

    SUBCASE("undamped symmetric mode: eigenvalues +-1, vectors (1, -+1)/sqrt2") {
        const auto bs0 = two_component_reduce(DampedWaveModel::second_order(dec, 1e-12));
        std::size_t k1 = 0;
        for (std::size_t k = 0; k < 9; ++k)
            if (dec.eigenvalues[k] == doctest::Approx(1.0)) k1 = k;
        CHECK(std::abs(bs0.lambda[k1][0] - cplx(1, 0)) < 1e-9);
        CHECK(std::abs(bs0.lambda[k1][1] - cplx(-1, 0)) < 1e-9);
        const double s = 1.0 / std::sqrt(2.0);
        CHECK(std::abs(bs0.V[k1][0][0] - cplx(s, 0)) < 1e-9);
        CHECK(std::abs(bs0.V[k1][1][0] - cplx(-s, 0)) < 1e-9);
        CHECK(std::abs(bs0.V[k1][1][1] - cplx(s, 0)) < 1e-9);
    }
    SUBCASE("projectors sum to the identity per mode") {
        for (std::size_t k = 0; k < 9; ++k) {
            const auto P0 = bs.projector(k, 0);
            const auto P1 = bs.projector(k, 1);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    const cplx sum = P0[i][j] + P1[i][j];
                    CHECK(std::abs(sum - (i == j ? cplx{1, 0} : cplx{0, 0})) < 1e-12);
                }
        }
    }
    SUBCASE("reduced evolution reproduces the second-order station series") {
        const double dt = 0.02;
        const std::size_t steps = 2000;
        const auto src = sample_white_noise(dec, dt, steps, 512, 0);
        const Station A = station_at(dec.domain, 2);

        const auto t_second = causal_solve(so, src, {A});
        // drive the two-component form with the same scalar noise
        auto tc = bs.model;
        const auto t_two = causal_solve(tc, src, {A});
        // u = U1 / (eps sqrt(mu)) mode-wise; compare via station series of u
        // computed from branch projections: instead, check the second-order u
        // against the two-component U1 synthesized with 1/sqrt(mu) weights.
        // Station series of U1 uses basis weights already, so rebuild u at A
        // from modes: rerun with snapshots off but mode tap via greens? Keep it
        // direct: march both systems mode-wise here.
        auto st2 = ModeState::zero(so);
        auto stU = ModeState::zero(tc);
        double err = 0.0;
        for (std::size_t t = 0; t < 400; ++t) {
            st2 = evolve(so, st2, dt);
            stU = evolve(tc, stU, dt);
            for (std::size_t k = 0; k < 9; ++k) {
                const cplx f = src.mode_values[t][k];
                const auto E = second_order_mode_propagator(dec.eigenvalues[k], a, dt / 2);
                st2.comp_a[k] += E.m12 * f * dt;
                st2.comp_b[k] += E.m22 * f * dt;
                const auto M = two_component_mode_propagator(dec.eigenvalues[k], a, dt / 2);
                const cplx g = cplx(0, -1.0) * f;  // eps = 1
                stU.comp_a[k] += M.m12 * g * dt;
                stU.comp_b[k] += M.m22 * g * dt;
            }
            for (std::size_t k = 0; k < 9; ++k) {
                const double mu = dec.eigenvalues[k];
                if (mu == 0.0) continue;
                const cplx u_from_two = stU.comp_a[k] / std::sqrt(mu);
                err = std::max(err, std::abs(u_from_two - st2.comp_a[k]));
            }
        }
        CHECK(err < 1e-10);
        CHECK(t_second.samples == t_two.samples);
    }
    SUBCASE("rejects variable damping") {
        std::vector<double> a_grid(dec.domain.size(), 0.5);
        a_grid[0] = 0.9;
        const auto var = DampedWaveModel::second_order_variable(dec, a_grid);
        CHECK_THROWS(two_component_reduce(var));
    }
}

TEST_CASE("energy is non-increasing along variable-damping trajectories") {
    const auto dec = build_laplacian(DiscreteDomain::circle(9));
    std::vector<double> a_grid(dec.domain.size());
    for (std::size_t j = 0; j < a_grid.size(); ++j)
        a_grid[j] = 0.3 + 0.2 * std::sin(dec.domain.point(j)[0]);
    const auto model = DampedWaveModel::second_order_variable(dec, a_grid);

    auto st = ModeState::zero(model);
    st.comp_a[1] = cplx(1.0, 0.2);
    st.comp_a[3] = cplx(0.0, -0.7);
    st.comp_b[2] = cplx(0.5, 0.5);

    auto energy = [&](const ModeState& s) {
        double e = 0.0;
        for (std::size_t k = 0; k < 9; ++k)
            e += dec.eigenvalues[k] * std::norm(s.comp_a[k]) + std::norm(s.comp_b[k]);
        return e;
    };
    double prev = energy(st);
    for (int i = 0; i < 30; ++i) {
        st = evolve(model, st, 0.2);
        const double e = energy(st);
        CHECK(e <= prev * (1.0 + 1e-12));
        prev = e;
    }
}

TEST_CASE("causality: output uncorrelated with future forcing") {
    const auto dec = build_laplacian(DiscreteDomain::circle(5));
    const auto model = DampedWaveModel::second_order(dec, 0.5);
    const double dt = 0.05;
    const std::size_t steps = 60000;
    const auto src = sample_white_noise(dec, dt, steps, 2024, 0);
    const Station A = station_at(dec.domain, 1);
    const auto traj = causal_solve(model, src, {A});

    // correlate u(t) with the forcing at t + 5 steps, at the station point
    cplx acc{0, 0};
    std::size_t cnt = 0;
    for (std::size_t t = traj.burn_in_samples; t + 5 < steps; ++t) {
        cplx f_future{0, 0};
        for (std::size_t k = 0; k < 5; ++k)
            f_future += src.mode_values[t + 5][k] * dec.basis_value(k, A.position);
        acc += traj.series[0][0][t] * std::conj(f_future);
        ++cnt;
    }
    acc /= static_cast<double>(cnt);
    // scale: |u| ~ sqrt(C(0)) and |f| ~ sqrt(1/(dt cell))
    const double scale = std::sqrt(std::abs(white_noise_closed_form(model, 0.0, A.position, A.position))) *
                         std::sqrt(1.0 / (dt * dec.domain.cell_volume));
    CHECK(std::abs(acc) < 4.0 * scale / std::sqrt(static_cast<double>(cnt)));
}

TEST_CASE("field trajectory export: binary payload and manifest metadata") {
    const auto dec = build_laplacian(DiscreteDomain::circle(5));
    const auto model = DampedWaveModel::second_order(dec, 0.5);
    const auto src = sample_white_noise(dec, 0.05, 400, 9, 0);
    const auto traj = causal_solve(model, src, {station_at(dec.domain, 0), station_at(dec.domain, 2)});
    namespace fs = std::filesystem;
    const auto bin = (fs::temp_directory_path() / "field.bin").string();
    const auto man = (fs::temp_directory_path() / "field.json").string();
    traj.export_binary(bin, man, 9, model.hash());
    CHECK(fs::file_size(bin) == traj.samples * 2 * sizeof(cplx));
    std::ifstream f(man);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("model_hash") != std::string::npos);
    CHECK(text.find("\"seed\": 9") != std::string::npos);
    CHECK(text.find("\"dt\":") != std::string::npos);
}

TEST_CASE("realness: real noise and real initial data stay real") {
    const auto dec = build_laplacian(DiscreteDomain::circle(9));
    const auto model = DampedWaveModel::second_order(dec, 0.5);
    const double dt = 0.05;
    const auto src = sample_white_noise(dec, dt, 3000, 5150, 0, /*real=*/true);
    const auto traj = causal_solve(model, src, {station_at(dec.domain, 0)});
    double max_im = 0.0, max_re = 0.0;
    for (const auto& v : traj.series[0][0]) {
        max_im = std::max(max_im, std::abs(v.imag()));
        max_re = std::max(max_re, std::abs(v.real()));
    }
    CHECK(max_im < 1e-12 * std::max(1.0, max_re));
}
