#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "natsim/errors.hpp"
#include "natsim/network.hpp"
#include "natsim/ode.hpp"

namespace natsim {

// Second moments C_ij = <a_i^dag a_j>.  Hermitian, PSD, diagonal = site
// occupations; C_kk at the detection site carries the transmission.
using MomentMatrix = Eigen::MatrixXcd;

// Closed generator for the second moments:
//   dC/dt = i (M^T C - C M^T) - (1/2){D, C} - deph_damp o C + P
// with M the frequency/coupling matrix, D = diag(loss), P = diag(pump), and
// deph_damp o C the entrywise damping gamma_i + gamma_j on i != j.  The
// closure is exact for this model: the Hamiltonian is quadratic and every
// dissipator is linear (a, a^dag) or quadratic-number (n), none of which
// couple second moments to higher ones.
struct MomentGenerator {
    Eigen::MatrixXd M;          // M_ii = omega_i, M_ij = g_ij
    Eigen::VectorXd loss;       // total loss rate per site
    Eigen::VectorXd pump;       // thermal drive per site
    Eigen::VectorXd deph;       // pure-dephasing rate per site
    Eigen::MatrixXd deph_damp;  // gamma_i + gamma_j off-diagonal, 0 on diagonal

    int n_sites() const { return static_cast<int>(M.rows()); }
};

inline MomentGenerator build_moment_generator(const ValidatedNetwork& network) {
    const int n = network.n_sites();
    MomentGenerator gen;
    gen.M = network.coupling_matrix();
    gen.loss = Eigen::VectorXd::Zero(n);
    gen.pump = Eigen::VectorXd::Zero(n);
    gen.deph = Eigen::VectorXd::Zero(n);
    const auto& inj = network.injection();
    const auto& det = network.detection();
    gen.loss[inj.site] += inj.gamma0;
    gen.loss[det.site] += 2.0 * det.gamma_det;
    gen.pump[inj.site] = inj.n_th * inj.gamma0;
    for (int i = 0; i < n; ++i) gen.deph[i] = network.gamma_deph()[i];
    gen.deph_damp.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            gen.deph_damp(i, j) = (i == j) ? 0.0 : gen.deph[i] + gen.deph[j];
    return gen;
}

inline MomentMatrix moment_derivative(const MomentGenerator& gen,
                                      const MomentMatrix& C) {
    const int n = gen.n_sites();
    const Eigen::MatrixXcd MT = gen.M.transpose().cast<cplx>();
    MomentMatrix dC = cplx(0.0, 1.0) * (MT * C - C * MT);
    // {D, C}/2 and the dephasing Hadamard term are both entrywise dampings
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            dC(i, j) -= (0.5 * (gen.loss[i] + gen.loss[j]) + gen.deph_damp(i, j)) *
                        C(i, j);
    for (int i = 0; i < n; ++i) dC(i, i) += gen.pump[i];
    return dC;
}

struct MomentTrajectory {
    std::vector<double> times;
    std::vector<MomentMatrix> states;
};

inline MomentTrajectory evolve_moments(const MomentGenerator& gen,
                                       const MomentMatrix& C0, double t_final,
                                       double tol = 1e-8) {
    const int n = gen.n_sites();
    if (C0.rows() != n || C0.cols() != n)
        throw DimensionMismatch("moment matrix does not match generator size");
    if (!(t_final > 0.0)) throw InvalidParameter("t_final");

    const int n_samples =
        std::max(401, static_cast<int>(std::ceil(40.0 * t_final)) + 1);
    std::vector<double> sample_times(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i)
        sample_times[static_cast<std::size_t>(i)] =
            t_final * static_cast<double>(i) / (n_samples - 1);

    MomentTrajectory traj;
    traj.times.reserve(sample_times.size());
    traj.states.reserve(sample_times.size());

    Eigen::VectorXcd y(n * n);
    Eigen::Map<MomentMatrix>(y.data(), n, n) = C0;
    auto rhs = [&](double, const Eigen::VectorXcd& yv, Eigen::VectorXcd& dyv) {
        Eigen::Map<const MomentMatrix> C(yv.data(), n, n);
        Eigen::Map<MomentMatrix> out(dyv.data(), n, n);
        out = moment_derivative(gen, C);
    };
    auto observe = [&](double t, const Eigen::VectorXcd& yv) {
        traj.times.push_back(t);
        traj.states.emplace_back(Eigen::Map<const MomentMatrix>(yv.data(), n, n));
    };
    OdeOptions opt;
    opt.rel_tol = tol;
    opt.abs_tol = tol * 1e-2;
    integrate_dp45(rhs, y, 0.0, t_final, opt, sample_times, observe);
    return traj;
}

namespace detail {

// Uniqueness precondition: every site must have a coupling path to a site
// with strictly positive loss, otherwise the generator kernel is nontrivial
// (an isolated lossless cluster keeps whatever occupation it starts with).
inline std::vector<int> undrained_sites(const MomentGenerator& gen) {
    const int n = gen.n_sites();
    std::vector<char> drained(static_cast<std::size_t>(n), 0);
    std::vector<int> queue;
    for (int i = 0; i < n; ++i)
        if (gen.loss[i] > 0.0) {
            drained[static_cast<std::size_t>(i)] = 1;
            queue.push_back(i);
        }
    while (!queue.empty()) {
        const int i = queue.back();
        queue.pop_back();
        for (int j = 0; j < n; ++j)
            if (j != i && gen.M(i, j) != 0.0 && !drained[static_cast<std::size_t>(j)]) {
                drained[static_cast<std::size_t>(j)] = 1;
                queue.push_back(j);
            }
    }
    std::vector<int> bad;
    for (int i = 0; i < n; ++i)
        if (!drained[static_cast<std::size_t>(i)]) bad.push_back(i);
    return bad;
}

}  // namespace detail

// Direct dense solve of the n^2 x n^2 linear system d(vec C)/dt = 0.  The
// entrywise dephasing damping rules out a plain Sylvester solve, so the full
// system is assembled; n^2 stays small for any realistic site count.
inline MomentMatrix steady_moments(const MomentGenerator& gen) {
    const int n = gen.n_sites();
    {
        const auto bad = detail::undrained_sites(gen);
        if (!bad.empty()) {
            std::string sites;
            for (int b : bad) sites += (sites.empty() ? "" : ", ") + std::to_string(b);
            throw SingularSystem("no dissipative path from site(s) " + sites +
                                 "; steady moments are not unique");
        }
    }
    const int nn = n * n;
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(nn, nn);
    auto idx = [n](int i, int j) { return i + n * j; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int row = idx(i, j);
            for (int k = 0; k < n; ++k) {
                A(row, idx(k, j)) += cplx(0.0, 1.0) * gen.M(k, i);   // (M^T C)_ij
                A(row, idx(i, k)) -= cplx(0.0, 1.0) * gen.M(j, k);   // (C M^T)_ij
            }
            A(row, row) += -0.5 * (gen.loss[i] + gen.loss[j]) - gen.deph_damp(i, j);
        }
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(nn);
    for (int i = 0; i < n; ++i) b[idx(i, i)] = -gen.pump[i];

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
    Eigen::VectorXcd x = lu.solve(b);
    MomentMatrix C = Eigen::Map<MomentMatrix>(x.data(), n, n);
    for (int pass = 0; pass < 3; ++pass) {
        const MomentMatrix r = moment_derivative(gen, C);
        if (r.norm() <= 1e-12 * std::max(1.0, C.norm())) break;
        Eigen::VectorXcd rv(nn);
        Eigen::Map<MomentMatrix>(rv.data(), n, n) = -r;
        x += lu.solve(rv);
        C = Eigen::Map<MomentMatrix>(x.data(), n, n);
    }
    const double res = moment_derivative(gen, C).norm();
    if (!(res <= 1e-12 * std::max(1.0, C.norm())))
        throw SingularSystem("steady-moment residual " + std::to_string(res) +
                             " did not reach tolerance");
    C = 0.5 * (C + C.adjoint().eval());  // rounding cleanup; exact fixed point is Hermitian
    return C;
}

inline double transmission_from_moments(const MomentMatrix& C_ss,
                                        const ValidatedNetwork& network) {
    const auto& det = network.detection();
    return 2.0 * det.gamma_det * C_ss(det.site, det.site).real();
}

}  // namespace natsim
