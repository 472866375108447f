#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "natsim/fock.hpp"

using namespace natsim;
using Catch::Approx;

TEST_CASE("build_basis dimensions") {
    REQUIRE(build_basis(1, 3).dim == 4);
    REQUIRE(build_basis(4, 3).dim == 256);
    REQUIRE(build_basis(2, 1).dim == 4);
    REQUIRE_THROWS_AS(build_basis(0, 3), InvalidParameter);
    REQUIRE_THROWS_AS(build_basis(2, 0), InvalidParameter);
}

TEST_CASE("build_basis caps the vectorized problem size") {
    // 4^8 = 65536 states is representable, but the squared (density-matrix)
    // side blows the default cap; the moment engine is the intended fallback.
    REQUIRE_THROWS_AS(build_basis(8, 3), Overflow);
    // 4^5 = 1024: dim^2 = 2^20 sits exactly at the cap and must pass
    REQUIRE(build_basis(5, 3).dim == 1024);
}

TEST_CASE("NAT_SIM_MAX_DIM overrides the cap") {
    setenv("NAT_SIM_MAX_DIM", "4096", 1);
    REQUIRE_THROWS_AS(build_basis(4, 3), Overflow);  // 256^2 > 4096
    REQUIRE(build_basis(3, 1).dim == 8);             // 64 <= 4096
    setenv("NAT_SIM_MAX_DIM", "not-a-number", 1);
    REQUIRE_THROWS_AS(build_basis(2, 2), ConfigParseError);
    unsetenv("NAT_SIM_MAX_DIM");
    REQUIRE(build_basis(4, 3).dim == 256);
}

TEST_CASE("state enumeration is site-0 slowest") {
    const FockBasis b = build_basis(2, 2);  // states |n0 n1>, index 3*n0 + n1
    REQUIRE(b.stride(0) == 3);
    REQUIRE(b.stride(1) == 1);
    REQUIRE(b.occupation(5, 0) == 1);
    REQUIRE(b.occupation(5, 1) == 2);
    REQUIRE(b.occupation(8, 0) == 2);
}

TEST_CASE("single-mode annihilator is the textbook lowering matrix") {
    const FockBasis b = build_basis(1, 1);
    const Eigen::MatrixXcd a = site_annihilator(b, 0);
    REQUIRE(a(0, 0) == cplx(0, 0));
    REQUIRE(a(0, 1) == cplx(1, 0));
    REQUIRE(a(1, 0) == cplx(0, 0));
    REQUIRE(a(1, 1) == cplx(0, 0));
}

TEST_CASE("annihilator matrix elements are sqrt(n)") {
    const FockBasis b = build_basis(1, 5);
    const Eigen::MatrixXcd a = site_annihilator(b, 0);
    for (int n = 1; n <= 5; ++n)
        REQUIRE(a(n - 1, n).real() == Approx(std::sqrt(double(n))).epsilon(1e-15));
    REQUIRE(a.cwiseAbs().sum() ==
            Approx(std::sqrt(1.) + std::sqrt(2.) + std::sqrt(3.) + std::sqrt(4.) +
                   std::sqrt(5.)));  // nothing off the first superdiagonal
}

TEST_CASE("canonical commutator holds below the truncation edge") {
    const FockBasis b = build_basis(1, 4);
    const SparseOperator a = site_annihilator(b, 0);
    const Eigen::MatrixXcd comm =
        (a * SparseOperator(a.adjoint()) - SparseOperator(a.adjoint()) * a);
    for (int n = 0; n < 4; ++n) REQUIRE(comm(n, n).real() == Approx(1.0));
    // the truncated top level is where [a, a^dag] = 1 has to give way
    REQUIRE(comm(4, 4).real() == Approx(-4.0));
}

TEST_CASE("operators on different sites commute") {
    const FockBasis b = build_basis(3, 2);
    const SparseOperator a0 = site_annihilator(b, 0);
    const SparseOperator a2 = site_annihilator(b, 2);
    REQUIRE((Eigen::MatrixXcd(a0 * a2) - Eigen::MatrixXcd(a2 * a0)).norm() == 0.0);
}

TEST_CASE("site_number equals a^dag a") {
    const FockBasis b = build_basis(2, 3);
    for (int site = 0; site < 2; ++site) {
        const SparseOperator a = site_annihilator(b, site);
        const Eigen::MatrixXcd diff =
            Eigen::MatrixXcd(site_number(b, site)) -
            Eigen::MatrixXcd(SparseOperator(a.adjoint()) * a);
        REQUIRE(diff.norm() == 0.0);
    }
}

TEST_CASE("site index is range-checked") {
    const FockBasis b = build_basis(2, 2);
    REQUIRE_THROWS_AS(site_annihilator(b, 2), IndexOutOfRange);
    REQUIRE_THROWS_AS(site_annihilator(b, -1), IndexOutOfRange);
    REQUIRE_THROWS_AS(site_number(b, 5), IndexOutOfRange);
}

TEST_CASE("photon totals sum per-site occupations") {
    const FockBasis b = build_basis(3, 2);
    const auto tot = photon_totals(b);
    for (std::int64_t s = 0; s < b.dim; ++s) {
        int sum = 0;
        for (int i = 0; i < 3; ++i) sum += b.occupation(s, i);
        REQUIRE(tot[static_cast<std::size_t>(s)] == sum);
    }
}

TEST_CASE("hamiltonian of a dead network is zero") {
    NetworkSpec s;
    s.n_sites = 2;
    s.omega = {0, 0};
    s.gamma_deph = {0, 0};
    s.couplings = {{0, 1, 0.0}};
    s.injection = {0, 0.5, 0.1};
    s.detection = {1, 0.5};
    const FockBasis b = build_basis(2, 2);
    REQUIRE(hamiltonian_matrix(validate_network(s), b).norm() == 0.0);
}

TEST_CASE("two-site hopping block is the 2x2 swap") {
    NetworkSpec s;
    s.n_sites = 2;
    s.omega = {0, 0};
    s.gamma_deph = {0, 0};
    s.couplings = {{0, 1, 0.37}};
    s.injection = {0, 0.5, 0.1};
    s.detection = {1, 0.5};
    const FockBasis b = build_basis(2, 1);  // |n0 n1>: 00,01,10,11
    const Eigen::MatrixXcd h = hamiltonian_matrix(validate_network(s), b);
    // single-excitation block {|10>, |01>} = indices {2, 1}
    REQUIRE(h(2, 1).real() == Approx(0.37));
    REQUIRE(h(1, 2).real() == Approx(0.37));
    REQUIRE(h(0, 0) == cplx(0, 0));
    REQUIRE(h(1, 1) == cplx(0, 0));
    // vacuum and doubly-occupied states are untouched by one hop
    for (int k = 0; k < 4; ++k) {
        REQUIRE(h(0, k) == cplx(0, 0));
        REQUIRE(h(3, k) == cplx(0, 0));
    }
}

TEST_CASE("hamiltonian is exactly Hermitian and conserves photon number") {
    const ValidatedNetwork net = validate_network(
        standard_four_site(InterferenceMode::Constructive, 0.7, 0.0));
    const FockBasis b = build_basis(4, 2);
    const Eigen::MatrixXcd h = hamiltonian_matrix(net, b);
    REQUIRE((h - h.adjoint()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXcd ntot = Eigen::MatrixXcd::Zero(b.dim, b.dim);
    for (int i = 0; i < 4; ++i) ntot += Eigen::MatrixXcd(site_number(b, i));
    REQUIRE((h * ntot - ntot * h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sign flip of g01 only touches 0<->1 hopping entries") {
    const FockBasis b = build_basis(4, 2);
    const Eigen::MatrixXcd hc = hamiltonian_matrix(
        validate_network(standard_four_site(InterferenceMode::Constructive, 0, 0)), b);
    const Eigen::MatrixXcd hd = hamiltonian_matrix(
        validate_network(standard_four_site(InterferenceMode::Destructive, 0, 0)), b);
    const Eigen::MatrixXcd diff = hd - hc;
    for (std::int64_t r = 0; r < b.dim; ++r)
        for (std::int64_t c = 0; c < b.dim; ++c) {
            if (diff(r, c) == cplx(0, 0)) continue;
            // a nonzero difference must move one photon between sites 0 and 1
            REQUIRE(std::abs(b.occupation(r, 0) - b.occupation(c, 0)) == 1);
            REQUIRE(std::abs(b.occupation(r, 1) - b.occupation(c, 1)) == 1);
            REQUIRE(b.occupation(r, 2) == b.occupation(c, 2));
            REQUIRE(b.occupation(r, 3) == b.occupation(c, 3));
            REQUIRE(diff(r, c) == -2.0 * hc(r, c));
        }
}

TEST_CASE("hamiltonian_matrix rejects mismatched sizes") {
    const ValidatedNetwork net = validate_network(
        standard_four_site(InterferenceMode::Constructive, 0, 0));
    const FockBasis b = build_basis(3, 2);
    REQUIRE_THROWS_AS(hamiltonian_matrix(net, b), DimensionMismatch);
}
