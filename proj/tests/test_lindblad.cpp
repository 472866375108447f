#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "natsim/lindblad.hpp"

using namespace natsim;
using Catch::Approx;

namespace {

DensityMatrix random_matrix(std::int64_t d, unsigned seed, bool hermitian) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> nd;
    DensityMatrix m(d, d);
    for (std::int64_t c = 0; c < d; ++c)
        for (std::int64_t r = 0; r < d; ++r) m(r, c) = cplx(nd(gen), nd(gen));
    if (hermitian) m = DensityMatrix((m + m.adjoint()) / 2.0);
    return m;
}

NetworkSpec single_site(double gamma0, double n_th, double gamma_det,
                        double gamma_deph = 0.0) {
    NetworkSpec s;
    s.n_sites = 1;
    s.omega = {0.0};
    s.gamma_deph = {gamma_deph};
    s.injection = {0, gamma0, n_th};
    s.detection = {0, gamma_det};
    return s;
}

}  // namespace

TEST_CASE("canned initial states are unit trace") {
    const auto basis = build_basis(2, 2);
    REQUIRE(vacuum_density(basis).trace().real() == Approx(1.0));
    REQUIRE(maximally_mixed_density(basis).trace().real() == Approx(1.0));
    REQUIRE(vacuum_density(basis)(0, 0).real() == 1.0);
}

TEST_CASE("liouvillian carries the expected jump set") {
    const auto basis = build_basis(4, 2);
    const auto net = validate_network(standard_four_site(
        InterferenceMode::Constructive, 0.0, 0.3));
    const auto s = build_liouvillian(net, basis);

    // thermal up, thermal down, detector, dephasing on site 2
    REQUIRE(s.jumps.size() == 4);
    REQUIRE(s.detection_site == 3);
    REQUIRE(s.gamma_det == 0.5);

    // site 0 is the slowest index: |1000> lives at stride 27, |0010> at 3
    const double up = std::sqrt(0.1 * 0.5), down = std::sqrt(1.1 * 0.5);
    REQUIRE(std::abs(s.jumps[0].coeff(27, 0) - up) < 1e-14);
    REQUIRE(std::abs(s.jumps[1].coeff(0, 27) - down) < 1e-14);
    REQUIRE(std::abs(s.jumps[2].coeff(0, 1) - std::sqrt(2.0 * 0.5)) < 1e-14);
    REQUIRE(std::abs(s.jumps[3].coeff(3, 3) - std::sqrt(2.0 * 0.3)) < 1e-14);

    SECTION("zero-rate channels are omitted") {
        auto spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0);
        spec.injection.n_th = 0.0;
        spec.detection.gamma_det = 0.0;
        const auto s2 = build_liouvillian(validate_network(spec), basis);
        REQUIRE(s2.jumps.size() == 1);  // only the vacuum-bath decay survives
        REQUIRE(s2.gamma_det == 0.0);
    }
    SECTION("basis and network site counts must agree") {
        REQUIRE_THROWS_AS(build_liouvillian(net, build_basis(3, 2)),
                          DimensionMismatch);
    }
}

TEST_CASE("generator annihilates the trace of arbitrary inputs") {
    const auto basis = build_basis(4, 2);
    const auto s = build_liouvillian(
        validate_network(standard_four_site(InterferenceMode::Destructive, 1.1, 0.4)),
        basis);
    for (unsigned seed : {11u, 12u}) {
        const auto g = random_matrix(basis.dim, seed, seed % 2 == 0);
        const auto lg = apply_superoperator(s, g);
        REQUIRE(std::abs(lg.trace()) < 1e-12 * g.cwiseAbs().maxCoeff() * basis.dim);
    }
}

TEST_CASE("matrix-free action equals the assembled vectorized generator") {
    // deliberately fed a NON-Hermitian argument: the two implementations must
    // agree as linear maps on the full matrix space, not just on the
    // Hermitian cone where integration nominally lives.  Roundoff puts small
    // anti-Hermitian components in front of the map on every step, and a
    // formulation that is only correct on Hermitian input amplifies them.
    const auto basis = build_basis(4, 2);
    const auto s = build_liouvillian(
        validate_network(standard_four_site(InterferenceMode::Destructive, 1.3, 0.7)),
        basis);
    const auto mvec = vectorized_matrix(s);
    const std::int64_t d = basis.dim;

    for (unsigned seed : {21u, 22u, 23u}) {
        const auto g = random_matrix(d, seed, /*hermitian=*/false);
        const auto direct = apply_superoperator(s, g);

        Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(g.data(), d * d);
        const Eigen::VectorXcd w = mvec * v;
        const Eigen::Map<const DensityMatrix> via_matrix(w.data(), d, d);

        const double scale = direct.cwiseAbs().maxCoeff();
        REQUIRE((direct - via_matrix).cwiseAbs().maxCoeff() < 1e-12 * scale);
    }
}

TEST_CASE("thermal pump settles onto a truncated geometric ladder") {
    const int cutoff = 5;
    const auto basis = build_basis(1, cutoff);
    const auto s =
        build_liouvillian(validate_network(single_site(0.5, 0.1, 0.0)), basis);
    const auto rho = steady_state(s);

    // detailed balance p_{n+1}/p_n = n_th/(n_th+1), renormalized on 0..cutoff
    const double q = 0.1 / 1.1;
    double z = 0.0;
    for (int n = 0; n <= cutoff; ++n) z += std::pow(q, n);
    for (int n = 0; n <= cutoff; ++n)
        REQUIRE(rho(n, n).real() == Approx(std::pow(q, n) / z).margin(1e-10));
    DensityMatrix off = rho;
    off.diagonal().setZero();
    REQUIRE(off.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pump and detector on one site set the occupancy analytically") {
    // birth-death balance: <n> = n_th G0 / (G0 + 2 Gdet) = 1/30 for the
    // standard rates; truncation at 5 photons shifts it by ~1e-7 relative
    const auto basis = build_basis(1, 5);
    const auto net = validate_network(single_site(0.5, 0.1, 0.5));
    const auto s = build_liouvillian(net, basis);
    const auto rho = steady_state(s);
    const auto occ = occupations_from_density(s, rho);
    REQUIRE(occ[0] == Approx(1.0 / 30.0).epsilon(1e-6));
    REQUIRE(transmission(rho, net, basis) == Approx(1.0 / 30.0).epsilon(1e-6));
}

TEST_CASE("a trivial generator leaves any state untouched") {
    NetworkSpec spec = single_site(0.0, 0.0, 0.0);
    const auto basis = build_basis(1, 2);
    const auto s = build_liouvillian(validate_network(spec), basis);
    REQUIRE(s.jumps.empty());
    const auto traj = evolve(s, maximally_mixed_density(basis), 3.0);
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        REQUIRE(traj.occupations(static_cast<Eigen::Index>(i), 0) ==
                Approx(1.0).margin(1e-12));  // (0+1+2)/3
        REQUIRE(traj.trace[i] == Approx(1.0).margin(1e-12));
        REQUIRE(traj.e_tr[i] == 0.0);
    }
}

TEST_CASE("a lone detector drains a Fock state exponentially") {
    const auto basis = build_basis(1, 3);
    const auto s =
        build_liouvillian(validate_network(single_site(0.0, 0.0, 0.5)), basis);
    DensityMatrix rho0 = DensityMatrix::Zero(basis.dim, basis.dim);
    rho0(1, 1) = 1.0;  // one photon
    const auto traj = evolve(s, rho0, 5.0);

    // d<n>/dt = -2 Gdet <n>  =>  <n>(t) = e^{-t};  E_tr counts the photon
    for (std::size_t i = 0; i < traj.times.size(); i += 25) {
        const double t = traj.times[i];
        REQUIRE(traj.occupations(static_cast<Eigen::Index>(i), 0) ==
                Approx(std::exp(-t)).margin(1e-7));
        REQUIRE(traj.e_tr[i] == Approx(1.0 - std::exp(-t)).margin(1e-7));
    }
    REQUIRE(traj.e_tr.back() == Approx(1.0 - std::exp(-5.0)).margin(1e-7));
}

TEST_CASE("evolve validates its inputs") {
    const auto basis = build_basis(1, 2);
    const auto s =
        build_liouvillian(validate_network(single_site(0.5, 0.1, 0.5)), basis);
    const auto rho0 = vacuum_density(basis);

    REQUIRE_THROWS_AS(evolve(s, DensityMatrix::Zero(2, 2), 1.0), DimensionMismatch);
    REQUIRE_THROWS_AS(evolve(s, rho0, 0.0), InvalidParameter);
    REQUIRE_THROWS_AS(evolve(s, rho0, -1.0), InvalidParameter);

    DensityMatrix skew = rho0;
    skew(0, 1) = cplx(0.0, 0.5);  // no conjugate partner
    REQUIRE_THROWS_AS(evolve(s, skew, 1.0), InvalidParameter);

    REQUIRE_THROWS_AS(evolve(s, DensityMatrix(2.0 * rho0), 1.0), InvalidParameter);
}

TEST_CASE("long evolution keeps its invariants and lands on the steady state") {
    const auto basis = build_basis(4, 2);
    const auto net = validate_network(
        standard_four_site(InterferenceMode::Constructive, 0.0, 0.0));
    const auto s = build_liouvillian(net, basis);

    const auto traj = evolve(s, vacuum_density(basis), 80.0);
    double worst_trace = 0.0;
    for (double tr : traj.trace)
        worst_trace = std::max(worst_trace, std::abs(tr - 1.0));
    REQUIRE(worst_trace < 1e-9);
    for (std::size_t i = 1; i < traj.e_tr.size(); ++i)
        REQUIRE(traj.e_tr[i] >= traj.e_tr[i - 1] - 1e-12);

    // late-time detector slope = steady transmission
    SteadyOptions fast;
    fast.check_degeneracy = false;
    const auto rho_ss = steady_state(s, fast);
    const double t_ss = transmission(rho_ss, net, basis);
    const std::size_t n = traj.times.size();
    const double slope = (traj.e_tr[n - 1] - traj.e_tr[n - 81]) /
                         (traj.times[n - 1] - traj.times[n - 81]);
    REQUIRE(slope == Approx(t_ss).epsilon(0.01));

    SECTION("the endpoint forgets the initial condition") {
        const auto traj2 = evolve(s, maximally_mixed_density(basis), 80.0);
        const Eigen::Index last = static_cast<Eigen::Index>(n - 1);
        for (int i = 0; i < 4; ++i)
            REQUIRE(traj2.occupations(last, i) ==
                    Approx(traj.occupations(last, i)).margin(1e-3));
    }
}

TEST_CASE("pure dephasing damps coherences and spares populations") {
    const auto basis = build_basis(1, 3);
    const auto s = build_liouvillian(
        validate_network(single_site(0.0, 0.0, 0.0, 0.3)), basis);

    DensityMatrix e01 = DensityMatrix::Zero(basis.dim, basis.dim);
    e01(0, 1) = 1.0;
    const auto l01 = apply_superoperator(s, e01);
    // rate -gamma (n - m)^2 on |n><m|
    REQUIRE((l01 + 0.3 * e01).cwiseAbs().maxCoeff() < 1e-14);

    DensityMatrix e02 = DensityMatrix::Zero(basis.dim, basis.dim);
    e02(0, 2) = 1.0;
    REQUIRE((apply_superoperator(s, e02) + 4.0 * 0.3 * e02).cwiseAbs().maxCoeff() <
            1e-14);

    DensityMatrix pop = DensityMatrix::Zero(basis.dim, basis.dim);
    pop(1, 1) = 1.0;
    REQUIRE(apply_superoperator(s, pop).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("transferred_energy is the trapezoid of the detector rate") {
    Trajectory traj;
    traj.times = {0.0, 0.5, 1.0};
    traj.occupations.resize(3, 2);
    traj.occupations << 0.0, 1.0, 0.0, 2.0, 0.0, 4.0;
    traj.detection_site = 1;
    const auto e = transferred_energy(traj, 0.25);
    REQUIRE(e.size() == 3);
    REQUIRE(e[0] == 0.0);
    REQUIRE(e[1] == Approx(0.375));   // 0.5 * avg(0.5, 1.0)
    REQUIRE(e[2] == Approx(1.125));
}

TEST_CASE("transmission weighs detector-site occupancy") {
    const auto basis = build_basis(4, 2);
    const auto net = validate_network(
        standard_four_site(InterferenceMode::Constructive, 0.0, 0.0));
    REQUIRE(transmission(vacuum_density(basis), net, basis) == 0.0);

    DensityMatrix rho = DensityMatrix::Zero(basis.dim, basis.dim);
    rho(1, 1) = 1.0;  // |0001>: one photon on the detector site
    REQUIRE(transmission(rho, net, basis) == Approx(2.0 * 0.5 * 1.0));
}

TEST_CASE("steady-state solver paths agree on the standard network") {
    const auto basis = build_basis(4, 2);
    const auto net = validate_network(
        standard_four_site(InterferenceMode::Destructive, 2.0, 0.4));
    const auto s = build_liouvillian(net, basis);

    const auto careful = steady_state(s);
    SteadyOptions fast;
    fast.check_degeneracy = false;
    const auto quick = steady_state(s, fast);

    REQUIRE((careful - quick).cwiseAbs().maxCoeff() < 1e-8);
    REQUIRE(careful.trace().real() == Approx(1.0).margin(1e-12));
    Eigen::SelfAdjointEigenSolver<DensityMatrix> es(careful);
    REQUIRE(es.eigenvalues().minCoeff() > -1e-10);
    REQUIRE(transmission(careful, net, basis) ==
            Approx(transmission(quick, net, basis)).epsilon(1e-9));
}

TEST_CASE("an unpumped network relaxes to the vacuum") {
    auto spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0);
    spec.injection.n_th = 0.0;
    const auto basis = build_basis(4, 2);
    const auto s = build_liouvillian(validate_network(spec), basis);
    const auto rho = steady_state(s);
    REQUIRE(rho(0, 0).real() == Approx(1.0).margin(1e-9));
    REQUIRE((rho - vacuum_density(basis)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("steady_state refuses a generator with no dissipation") {
    const auto basis = build_basis(1, 2);
    const auto s =
        build_liouvillian(validate_network(single_site(0.0, 0.0, 0.0)), basis);
    REQUIRE_THROWS_AS(steady_state(s), DegenerateSteadyState);
}

TEST_CASE("the flow preserves positivity, not just the trace") {
    // propagate the raw vectorized state and eigen-check it at checkpoints
    const auto basis = build_basis(4, 2);
    const auto s = build_liouvillian(
        validate_network(standard_four_site(InterferenceMode::Destructive, 0.0, 0.5)),
        basis);
    const std::int64_t d = basis.dim;

    Eigen::VectorXcd y(d * d);
    Eigen::Map<DensityMatrix>(y.data(), d, d) = vacuum_density(basis);
    DensityMatrix w1(d, d), w2(d, d);
    auto rhs = [&](double, const Eigen::VectorXcd& yv, Eigen::VectorXcd& dyv) {
        Eigen::Map<const DensityMatrix> rho(yv.data(), d, d);
        Eigen::Map<DensityMatrix> out(dyv.data(), d, d);
        DensityMatrix tmp;
        apply_superoperator(s, rho, tmp, w1, w2);
        out = tmp;
    };
    const std::vector<double> checkpoints{2.0, 5.0, 10.0, 20.0};
    OdeOptions opt;
    opt.rel_tol = 1e-9;
    opt.abs_tol = 1e-11;
    integrate_dp45(rhs, y, 0.0, 20.0, opt, checkpoints,
                   [&](double, const Eigen::VectorXcd& yv) {
                       const Eigen::Map<const DensityMatrix> rho(yv.data(), d, d);
                       REQUIRE(std::abs(rho.trace().real() - 1.0) < 1e-9);
                       REQUIRE((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-9);
                       Eigen::SelfAdjointEigenSolver<DensityMatrix> es(
                           DensityMatrix((rho + rho.adjoint()) / 2.0));
                       REQUIRE(es.eigenvalues().minCoeff() > -1e-8);
                   });
}

TEST_CASE("occupations_from_density reads off basis-state occupations") {
    const auto basis = build_basis(2, 2);
    const auto s =
        build_liouvillian(validate_network(chain_network(2, 0.3)), basis);
    DensityMatrix rho = DensityMatrix::Zero(basis.dim, basis.dim);
    rho(7, 7) = 1.0;  // |2 1>
    const auto occ = occupations_from_density(s, rho);
    REQUIRE(occ.size() == 2);
    REQUIRE(occ[0] == Approx(2.0));
    REQUIRE(occ[1] == Approx(1.0));
}
