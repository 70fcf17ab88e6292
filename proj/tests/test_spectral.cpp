#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "corrlab/rng.hpp"
#include "corrlab/spectral.hpp"
#include "doctest.h"

using namespace corrlab;

TEST_CASE("circle laplacian: exact fourier symbols") {
    const auto dec = build_laplacian(DiscreteDomain::circle(5));
    REQUIRE(dec.eigenvalues.size() == 5);
    CHECK(dec.eigenvalues[0] == doctest::Approx(0.0));
    CHECK(dec.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(dec.eigenvalues[2] == doctest::Approx(1.0));
    CHECK(dec.eigenvalues[3] == doctest::Approx(4.0));
    CHECK(dec.eigenvalues[4] == doctest::Approx(4.0));
}

TEST_CASE("neumann interval: cosine modes") {
    const auto dec = build_laplacian(DiscreteDomain::interval_neumann(3, kPi));
    REQUIRE(dec.eigenvalues.size() == 3);
    CHECK(dec.eigenvalues[0] == doctest::Approx(0.0));
    CHECK(dec.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(dec.eigenvalues[2] == doctest::Approx(4.0));
}

TEST_CASE("torus 3x3: |k|^2 spectrum") {
    const auto dec = build_laplacian(DiscreteDomain::torus(3, 3));
    REQUIRE(dec.eigenvalues.size() == 9);
    const std::vector<double> want{0, 1, 1, 1, 1, 2, 2, 2, 2};
    for (std::size_t i = 0; i < 9; ++i) CHECK(dec.eigenvalues[i] == doctest::Approx(want[i]));
}

TEST_CASE("rejects degenerate domains") {
    CHECK_THROWS(DiscreteDomain::circle(1));
    CHECK_THROWS(DiscreteDomain::circle(8, 0.0));
    CHECK_THROWS(build_laplacian(DiscreteDomain{}));
}

TEST_CASE("basis orthonormality in the weighted inner product") {
    for (auto dec : {build_laplacian(DiscreteDomain::circle(7)),
                     build_laplacian(DiscreteDomain::interval_neumann(6, 2.0)),
                     build_laplacian(DiscreteDomain::torus(3, 5))}) {
        const std::size_t n = dec.n_modes();
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t l = 0; l < n; ++l) {
                cplx ip{0, 0};
                for (std::size_t j = 0; j < dec.domain.size(); ++j)
                    ip += std::conj(dec.basis_value(k, dec.domain.point(j))) *
                          dec.basis_value(l, dec.domain.point(j));
                ip *= dec.domain.cell_volume;
                CHECK(std::abs(ip - (k == l ? cplx{1, 0} : cplx{0, 0})) < 1e-12);
            }
    }
}

TEST_CASE("parseval on random fields") {
    const auto dec = build_laplacian(DiscreteDomain::circle(9, 3.0));
    CounterRng r(3, 0);
    Field u(9);
    for (auto& v : u) v = r.gaussian_complex();
    const auto c = dec.to_modes(u);
    double sum = 0.0;
    for (const auto& v : c) sum += std::norm(v);
    CHECK(sum == doctest::Approx(norm2(u, dec.domain.cell_volume)).epsilon(1e-10));
}

TEST_CASE("functional calculus: constants, eigenfunctions, composition") {
    const auto dec = build_laplacian(DiscreteDomain::circle(9));
    CounterRng r(17, 0);
    Field u(9);
    for (auto& v : u) v = r.gaussian_complex();

    SUBCASE("constant function is the identity") {
        const auto w = apply_operator_function(dec, [](double) { return cplx{1, 0}; }, u);
        for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(w[i] - u[i]) < 1e-12);
    }
    SUBCASE("multiplying an eigenfunction by f(mu)") {
        Field e(9);
        for (std::size_t j = 0; j < 9; ++j) {
            const double x = dec.domain.point(j)[0];
            e[j] = std::exp(cplx(0, x));
        }
        const auto w = apply_operator_function(dec, [](double mu) { return cplx(mu, 0); }, e);
        for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(w[i] - e[i]) < 1e-11);
    }
    SUBCASE("composition f(g) = f after g") {
        auto g = [](double mu) { return cplx(std::exp(-mu), 0); };
        auto fcomp = [](double mu) { return cplx(2.0 * std::exp(-mu), 0); };
        const auto w1 = apply_operator_function(dec, fcomp, u);
        auto half = apply_operator_function(dec, g, u);
        const auto w2 = apply_operator_function(dec, [](double) { return cplx(2.0, 0); }, half);
        for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(w1[i] - w2[i]) < 1e-10);
    }
    SUBCASE("rejects non-finite values on the spectrum") {
        CHECK_THROWS(apply_operator_function(dec, [](double mu) { return cplx(1.0 / mu, 0); }, u));
    }
}

TEST_CASE("heat smoothing matches a dense eigensolver oracle") {
    const std::size_t n = 8;
    const auto domain = DiscreteDomain::circle(n);
    const auto dec = build_laplacian(domain);

    // Assemble the operator matrix of -Lap in grid coordinates from the
    // multiplier decomposition, then decompose it densely.
    std::vector<Field> cols(n, Field(n, cplx{0, 0}));
    for (std::size_t j = 0; j < n; ++j) {
        Field delta(n, cplx{0, 0});
        delta[j] = 1.0;
        cols[j] = apply_operator_function(dec, [](double mu) { return cplx(mu, 0); }, delta);
    }
    const auto dense = build_dense_decomposition(domain, cols);

    Field spike(n, cplx{0, 0});
    spike[2] = 1.0 / domain.cell_volume;
    auto f = [](double mu) { return cplx(std::exp(-mu), 0.0); };
    const auto a = apply_operator_function(dec, f, spike);
    const auto b = apply_operator_function(dense, f, spike);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
}

TEST_CASE("dense path enforces hermiticity and the mode cap") {
    const auto domain = DiscreteDomain::circle(4);
    std::vector<Field> cols(4, Field(4, cplx{0, 0}));
    cols[0][1] = 1.0;  // not hermitian
    CHECK_THROWS(build_dense_decomposition(domain, cols));
}
