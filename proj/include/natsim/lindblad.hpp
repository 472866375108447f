#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/UmfPackSupport>

#include "natsim/errors.hpp"
#include "natsim/fock.hpp"
#include "natsim/network.hpp"
#include "natsim/ode.hpp"

namespace natsim {

// Dense system state rho (Hermitian, trace 1, PSD up to tolerance).
using DensityMatrix = Eigen::MatrixXcd;

inline DensityMatrix vacuum_density(const FockBasis& basis) {
    DensityMatrix rho = DensityMatrix::Zero(basis.dim, basis.dim);
    rho(0, 0) = 1.0;
    return rho;
}

inline DensityMatrix maximally_mixed_density(const FockBasis& basis) {
    return DensityMatrix::Identity(basis.dim, basis.dim) /
           static_cast<double>(basis.dim);
}

// Master-equation generator in factored form: unitary part H plus jump
// operators J_m, each contributing J rho J^dag - (1/2){J^dag J, rho}.  The
// action on vectorized rho (column stacking, v = row + dim*col) is available
// either matrix-free via apply() or assembled via vectorized_matrix().
struct Superoperator {
    FockBasis basis;
    SparseOperator H;
    std::vector<SparseOperator> jumps;
    std::vector<SparseOperator> jump_adjoints;
    std::vector<SparseOperator> jump_gains;  // J^dag J
    std::vector<int> totals;                 // photon number per basis state
    Eigen::MatrixXd occupation_table;        // dim x n_sites, per-state occupations
    int detection_site = -1;
    double gamma_det = 0.0;

    std::int64_t dim() const { return basis.dim; }
    std::int64_t dim2() const { return basis.dim * basis.dim; }
};

namespace detail {

inline void push_jump(Superoperator& s, SparseOperator j) {
    s.jump_adjoints.push_back(j.adjoint());
    s.jump_gains.push_back((s.jump_adjoints.back() * j).pruned());
    s.jumps.push_back(std::move(j));
}

}  // namespace detail

// Injection enters as the pair sqrt(n_th G0) a0^dag (absorption from the bath)
// and sqrt((n_th+1) G0) a0 (emission into it); detection as sqrt(2 Gdet) a_k;
// pure dephasing as sqrt(2 gamma_i) n_i.  Zero-rate channels are omitted.
inline Superoperator build_liouvillian(const ValidatedNetwork& network,
                                       const FockBasis& basis) {
    if (network.n_sites() != basis.n_sites)
        throw DimensionMismatch("network has " + std::to_string(network.n_sites()) +
                                " sites, basis has " + std::to_string(basis.n_sites));
    Superoperator s;
    s.basis = basis;
    s.H = hamiltonian_matrix(network, basis);
    s.totals = photon_totals(basis);
    s.occupation_table.resize(basis.dim, basis.n_sites);
    for (std::int64_t st = 0; st < basis.dim; ++st)
        for (int i = 0; i < basis.n_sites; ++i)
            s.occupation_table(st, i) = basis.occupation(st, i);

    const auto& inj = network.injection();
    if (inj.gamma0 > 0.0) {
        const SparseOperator a0 = site_annihilator(basis, inj.site);
        if (inj.n_th > 0.0)
            detail::push_jump(s, SparseOperator(std::sqrt(inj.n_th * inj.gamma0) *
                                                a0.adjoint()));
        detail::push_jump(
            s, SparseOperator(std::sqrt((inj.n_th + 1.0) * inj.gamma0) * a0));
    }
    const auto& det = network.detection();
    s.detection_site = det.site;
    s.gamma_det = det.gamma_det;
    if (det.gamma_det > 0.0)
        detail::push_jump(s, SparseOperator(std::sqrt(2.0 * det.gamma_det) *
                                            site_annihilator(basis, det.site)));
    for (int i = 0; i < network.n_sites(); ++i) {
        const double g = network.gamma_deph()[i];
        if (g > 0.0)
            detail::push_jump(
                s, SparseOperator(std::sqrt(2.0 * g) * site_number(basis, i)));
    }
    return s;
}

// L(rho) acting on a dense matrix: -i[H, rho] plus J rho J^dag
// - (1/2){J^dag J, rho} per channel.
inline void apply_superoperator(const Superoperator& s, const DensityMatrix& rho,
                                DensityMatrix& out, DensityMatrix& work1,
                                DensityMatrix& work2) {
    // Written as explicit left/right products rather than the tempting
    // w + w.adjoint() shortcut: the latter is only equal on exactly Hermitian
    // input, and roundoff feeds the map tiny anti-Hermitian components.  On
    // those the shortcut flips the anticommutator damping into a rotation, so
    // they stop decaying and compound exponentially over long integrations.
    work1.noalias() = s.H * rho;
    work2.noalias() = rho * s.H;
    out = cplx(0.0, -1.0) * (work1 - work2);
    for (std::size_t m = 0; m < s.jumps.size(); ++m) {
        work1.noalias() = s.jumps[m] * rho;
        out.noalias() += work1 * s.jump_adjoints[m];
        work1.noalias() = s.jump_gains[m] * rho;
        work2.noalias() = rho * s.jump_gains[m];
        out.noalias() -= 0.5 * (work1 + work2);
    }
}

inline DensityMatrix apply_superoperator(const Superoperator& s,
                                         const DensityMatrix& rho) {
    DensityMatrix out, w1, w2;
    apply_superoperator(s, rho, out, w1, w2);
    return out;
}

namespace detail {

// Enumerates the nonzero entries of the vectorized generator
// M[(r + d c), (r' + d c')] such that (M vec rho) = vec L(rho), emitting each
// contribution through sink(row, col, value).  Column-stacking identity used
// throughout: vec(A rho B) = (B^T kron A) vec rho.
template <class Sink>
void for_each_liouvillian_entry(const Superoperator& s, Sink&& sink) {
    const std::int64_t d = s.basis.dim;
    const cplx mi(0.0, -1.0), pi(0.0, 1.0);
    for (int k = 0; k < s.H.outerSize(); ++k)
        for (SparseOperator::InnerIterator it(s.H, k); it; ++it) {
            // -iH rho: block-diagonal copy of H;  +i rho H: transposed copy.
            for (std::int64_t c = 0; c < d; ++c)
                sink(it.row() + d * c, it.col() + d * c, mi * it.value());
            for (std::int64_t r = 0; r < d; ++r)
                sink(r + d * it.col(), r + d * it.row(), pi * it.value());
        }
    for (std::size_t m = 0; m < s.jumps.size(); ++m) {
        const SparseOperator& J = s.jumps[m];
        for (int k1 = 0; k1 < J.outerSize(); ++k1)
            for (SparseOperator::InnerIterator it1(J, k1); it1; ++it1)
                for (int k2 = 0; k2 < J.outerSize(); ++k2)
                    for (SparseOperator::InnerIterator it2(J, k2); it2; ++it2)
                        sink(it1.row() + d * it2.row(), it1.col() + d * it2.col(),
                             it1.value() * std::conj(it2.value()));
        const SparseOperator& G = s.jump_gains[m];
        for (int k = 0; k < G.outerSize(); ++k)
            for (SparseOperator::InnerIterator it(G, k); it; ++it) {
                for (std::int64_t c = 0; c < d; ++c)
                    sink(it.row() + d * c, it.col() + d * c, -0.5 * it.value());
                for (std::int64_t r = 0; r < d; ++r)
                    sink(r + d * it.col(), r + d * it.row(), -0.5 * it.value());
            }
    }
}

}  // namespace detail

// Full dim^2 x dim^2 sparse matrix of the generator (column-stacked).
inline Eigen::SparseMatrix<cplx> vectorized_matrix(const Superoperator& s) {
    std::vector<Eigen::Triplet<cplx>> trip;
    detail::for_each_liouvillian_entry(
        s, [&](std::int64_t r, std::int64_t c, cplx w) {
            trip.emplace_back(static_cast<int>(r), static_cast<int>(c), w);
        });
    Eigen::SparseMatrix<cplx> m(s.dim2(), s.dim2());
    m.setFromTriplets(trip.begin(), trip.end());
    m.makeCompressed();
    return m;
}

// Sampled observable record along a time evolution.
struct Trajectory {
    std::vector<double> times;
    Eigen::MatrixXd occupations;  // n_samples x n_sites, <n_i> per sample
    std::vector<double> trace;
    std::vector<double> e_tr;  // detected-photon count, integrated in-line
    int detection_site = -1;
    double gamma_det = 0.0;
};

// Cumulative trapezoid of 2 Gdet <n_k>; exact on linear segments, zero at the
// first sample, nondecreasing because the integrand is nonnegative.
inline std::vector<double> transferred_energy(const Trajectory& traj,
                                              double gamma_det) {
    std::vector<double> e(traj.times.size(), 0.0);
    for (std::size_t i = 1; i < traj.times.size(); ++i) {
        const double dt = traj.times[i] - traj.times[i - 1];
        const double f0 = traj.occupations(static_cast<Eigen::Index>(i - 1),
                                           traj.detection_site);
        const double f1 =
            traj.occupations(static_cast<Eigen::Index>(i), traj.detection_site);
        e[i] = e[i - 1] + gamma_det * dt * (f0 + f1);  // 2 Gdet * avg * dt
    }
    return e;
}

// Adaptive Dormand-Prince 5(4) propagation of the master equation.  The
// detected-photon integral rides along as one extra ODE component, so its
// accuracy is governed by the same local error control as rho itself rather
// than by the output sampling density.
inline Trajectory evolve(const Superoperator& s, const DensityMatrix& rho0,
                         double t_final, double tol = 1e-8) {
    const std::int64_t d = s.basis.dim;
    if (rho0.rows() != d || rho0.cols() != d)
        throw DimensionMismatch("initial state dimension does not match basis");
    if (!(t_final > 0.0)) throw InvalidParameter("t_final");
    if ((rho0 - rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
        throw InvalidParameter("initial state is not Hermitian");
    if (std::abs(rho0.trace().real() - 1.0) > 1e-10 ||
        std::abs(rho0.trace().imag()) > 1e-10)
        throw InvalidParameter("initial state is not unit trace");

    const int n_samples =
        std::max(401, static_cast<int>(std::ceil(40.0 * t_final)) + 1);
    std::vector<double> sample_times(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i)
        sample_times[static_cast<std::size_t>(i)] =
            t_final * static_cast<double>(i) / (n_samples - 1);

    Trajectory traj;
    traj.detection_site = s.detection_site;
    traj.gamma_det = s.gamma_det;
    traj.times.reserve(sample_times.size());
    traj.occupations.resize(n_samples, s.basis.n_sites);
    traj.trace.reserve(sample_times.size());
    traj.e_tr.reserve(sample_times.size());

    Eigen::VectorXcd y(d * d + 1);
    Eigen::Map<DensityMatrix>(y.data(), d, d) = rho0;
    y[d * d] = 0.0;

    DensityMatrix w1(d, d), w2(d, d);
    auto rhs = [&](double, const Eigen::VectorXcd& yv, Eigen::VectorXcd& dyv) {
        Eigen::Map<const DensityMatrix> rho(yv.data(), d, d);
        Eigen::Map<DensityMatrix> out(dyv.data(), d, d);
        // Explicit left/right products, not w + w.adjoint(); see the note on
        // apply_superoperator for why the shortcut diverges here.
        w1.noalias() = s.H * rho;
        w2.noalias() = rho * s.H;
        out = cplx(0.0, -1.0) * (w1 - w2);
        for (std::size_t m = 0; m < s.jumps.size(); ++m) {
            w1.noalias() = s.jumps[m] * rho;
            out.noalias() += w1 * s.jump_adjoints[m];
            w1.noalias() = s.jump_gains[m] * rho;
            w2.noalias() = rho * s.jump_gains[m];
            out.noalias() -= 0.5 * (w1 + w2);
        }
        double nk = 0.0;
        if (s.detection_site >= 0)
            for (std::int64_t st = 0; st < d; ++st)
                nk += s.occupation_table(st, s.detection_site) *
                      rho(st, st).real();
        dyv[d * d] = 2.0 * s.gamma_det * nk;
    };

    int row = 0;
    auto observe = [&](double t, const Eigen::VectorXcd& yv) {
        Eigen::Map<const DensityMatrix> rho(yv.data(), d, d);
        double tr = 0.0;
        for (std::int64_t st = 0; st < d; ++st) tr += rho(st, st).real();
        if (std::abs(tr - 1.0) > 10.0 * tol)
            throw InvariantViolation("trace drifted to " + std::to_string(tr) +
                                     " at t=" + std::to_string(t));
        for (int i = 0; i < s.basis.n_sites; ++i) {
            double ni = 0.0;
            for (std::int64_t st = 0; st < d; ++st)
                ni += s.occupation_table(st, i) * rho(st, st).real();
            traj.occupations(row, i) = ni;
        }
        traj.times.push_back(t);
        traj.trace.push_back(tr);
        traj.e_tr.push_back(yv[d * d].real());
        ++row;
    };

    // The generator is exactly trace-free, so any trace motion within a step
    // is pure truncation error.  Rescaling after each accepted step stops
    // that error from accumulating over long horizons (it is the scheme's
    // only non-conserved linear invariant); a single step that moves the
    // trace past the guard means the error control itself has failed.
    auto project_trace = [&](double t, Eigen::VectorXcd& yv) {
        double tr = 0.0;
        for (std::int64_t st = 0; st < d; ++st)
            tr += yv[st * d + st].real();
        if (std::abs(tr - 1.0) > 10.0 * tol)
            throw InvariantViolation("trace drifted to " + std::to_string(tr) +
                                     " at t=" + std::to_string(t));
        const double scale = 1.0 / tr;
        yv.head(d * d) *= scale;  // leave the E_tr component alone
    };

    // Explicit stepping is only stable while h times the generator's spectral
    // radius stays inside the embedded pair's stability region.  Once the
    // transient has decayed, the local error estimate alone lets h creep past
    // that boundary: roundoff seeds the fastest coherences and they grow
    // geometrically for tens of steps before the controller reacts.  Capping
    // h with a norm bound on the generator (Gershgorin for H, the largest
    // gain for each dissipator) keeps the stepper out of that regime.
    double h_norm = 0.0;
    for (int c = 0; c < s.H.outerSize(); ++c) {
        double col = 0.0;
        for (SparseOperator::InnerIterator it(s.H, c); it; ++it)
            col += std::abs(it.value());
        h_norm = std::max(h_norm, col);
    }
    double gain_sum = 0.0;
    for (const auto& g : s.jump_gains) {
        double gmax = 0.0;
        for (int c = 0; c < g.outerSize(); ++c)
            for (SparseOperator::InnerIterator it(g, c); it; ++it)
                gmax = std::max(gmax, std::abs(it.value()));
        gain_sum += gmax;
    }
    const double spectral_bound = 2.0 * (h_norm + gain_sum);

    OdeOptions opt;
    opt.rel_tol = tol;
    opt.abs_tol = tol * 1e-2;
    if (spectral_bound > 0.0) opt.max_step = 2.2 / spectral_bound;
    integrate_dp45(rhs, y, 0.0, t_final, opt, sample_times, observe,
                   project_trace);
    return traj;
}

inline Eigen::VectorXd occupations_from_density(const Superoperator& s,
                                                const DensityMatrix& rho) {
    Eigen::VectorXd occ = Eigen::VectorXd::Zero(s.basis.n_sites);
    for (int i = 0; i < s.basis.n_sites; ++i)
        for (std::int64_t st = 0; st < s.basis.dim; ++st)
            occ[i] += s.occupation_table(st, i) * rho(st, st).real();
    return occ;
}

struct SteadyOptions {
    bool check_degeneracy = true;  // second solve with a different pinned row
    double residual_factor = 1e-10;
};

namespace detail {

// Steady-state solve in the conserved-charge sector.  Every jump operator
// shifts the photon total of rows and columns by the same amount, so the
// generator never mixes matrix elements with different (row total - column
// total); the trace-1 fixed point lives entirely in the equal-totals block.
// Within that block the Hermiticity of rho halves the problem to a real
// linear system: unknowns Re/Im rho_rc for r<c plus rho_rr, equations the
// real and imaginary parts of (L rho)_rc for r<c plus the real part on the
// diagonal, one equation replaced by the trace constraint.
struct HermitianSectorSystem {
    std::int64_t d = 0;
    // canonical pair list: (r, c) with r <= c and equal photon totals
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    std::vector<int> base;        // row/unknown base index per pair
    std::vector<int> diag_base;   // unknown index of each (r, r)
    int size = 0;                 // real dimension
    std::vector<Eigen::Triplet<double>> trip;  // equations, unreplaced
    double frob_norm = 0.0;
};

inline HermitianSectorSystem build_hermitian_sector(const Superoperator& s) {
    HermitianSectorSystem sys;
    const std::int64_t d = s.basis.dim;
    sys.d = d;
    // pair index for every sector (r, c) with r <= c; -1 elsewhere
    std::vector<int> pair_of(static_cast<std::size_t>(d * d), -1);
    for (std::int64_t c = 0; c < d; ++c)
        for (std::int64_t r = 0; r <= c; ++r)
            if (s.totals[static_cast<std::size_t>(r)] ==
                s.totals[static_cast<std::size_t>(c)]) {
                pair_of[static_cast<std::size_t>(r + d * c)] =
                    static_cast<int>(sys.pairs.size());
                sys.pairs.emplace_back(r, c);
            }
    sys.base.resize(sys.pairs.size());
    int next = 0;
    for (std::size_t p = 0; p < sys.pairs.size(); ++p) {
        sys.base[p] = next;
        next += (sys.pairs[p].first == sys.pairs[p].second) ? 1 : 2;
    }
    sys.size = next;
    sys.diag_base.resize(static_cast<std::size_t>(d));
    for (std::size_t p = 0; p < sys.pairs.size(); ++p)
        if (sys.pairs[p].first == sys.pairs[p].second)
            sys.diag_base[static_cast<std::size_t>(sys.pairs[p].first)] =
                sys.base[p];

    double norm2 = 0.0;
    auto sink = [&](std::int64_t row_v, std::int64_t col_v, cplx w) {
        const std::int64_t er = row_v % d, ec = row_v / d;
        if (er > ec) return;  // lower-triangle equations are redundant
        const int ep = pair_of[static_cast<std::size_t>(row_v)];
        if (ep < 0) return;
        const std::int64_t ur = col_v % d, uc = col_v / d;
        if (s.totals[static_cast<std::size_t>(ur)] !=
            s.totals[static_cast<std::size_t>(uc)])
            return;
        const bool eq_diag = (er == ec);
        const int erow = sys.base[static_cast<std::size_t>(ep)];
        norm2 += std::norm(w) * (eq_diag ? 1.0 : 2.0);
        if (ur == uc) {
            const int b = sys.diag_base[static_cast<std::size_t>(ur)];
            sys.trip.emplace_back(erow, b, w.real());
            if (!eq_diag) sys.trip.emplace_back(erow + 1, b, w.imag());
        } else if (ur < uc) {
            const int b =
                sys.base[static_cast<std::size_t>(pair_of[static_cast<std::size_t>(
                    ur + d * uc)])];
            sys.trip.emplace_back(erow, b, w.real());
            sys.trip.emplace_back(erow, b + 1, -w.imag());
            if (!eq_diag) {
                sys.trip.emplace_back(erow + 1, b, w.imag());
                sys.trip.emplace_back(erow + 1, b + 1, w.real());
            }
        } else {  // unknown in the lower triangle: rho_uc,ur conjugated
            const int b =
                sys.base[static_cast<std::size_t>(pair_of[static_cast<std::size_t>(
                    uc + d * ur)])];
            sys.trip.emplace_back(erow, b, w.real());
            sys.trip.emplace_back(erow, b + 1, w.imag());
            if (!eq_diag) {
                sys.trip.emplace_back(erow + 1, b, w.imag());
                sys.trip.emplace_back(erow + 1, b + 1, -w.real());
            }
        }
    };
    for_each_liouvillian_entry(s, sink);
    sys.frob_norm = std::sqrt(norm2);
    // structural diagonal so the pattern is stable across parameter changes
    for (int b = 0; b < sys.size; ++b) sys.trip.emplace_back(b, b, 0.0);
    return sys;
}

inline DensityMatrix unpack_hermitian(const HermitianSectorSystem& sys,
                                      const Eigen::VectorXd& x) {
    DensityMatrix rho = DensityMatrix::Zero(sys.d, sys.d);
    for (std::size_t p = 0; p < sys.pairs.size(); ++p) {
        const auto [r, c] = sys.pairs[p];
        if (r == c) {
            rho(r, r) = x[sys.base[p]];
        } else {
            const cplx v(x[sys.base[p]], x[sys.base[p] + 1]);
            rho(r, c) = v;
            rho(c, r) = std::conj(v);
        }
    }
    return rho;
}

// One pinned-row solve: the equation at `pin_pair` (a diagonal pair) is
// replaced by the trace constraint.  Iterative refinement against the
// matrix-free generator drives the true residual down to the target.
struct PinnedSolveResult {
    bool factor_ok = false;
    bool converged = false;
    double residual = 0.0;
    DensityMatrix rho;
};

inline PinnedSolveResult solve_pinned(const Superoperator& s,
                                      const HermitianSectorSystem& sys,
                                      std::int64_t pin_state, double target) {
    PinnedSolveResult res;
    const int pin_row = sys.diag_base[static_cast<std::size_t>(pin_state)];
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(sys.trip.size() + static_cast<std::size_t>(sys.d));
    for (const auto& t : sys.trip)
        if (t.row() != pin_row) trip.push_back(t);
    for (std::int64_t st = 0; st < sys.d; ++st)
        trip.emplace_back(pin_row, sys.diag_base[static_cast<std::size_t>(st)], 1.0);

    Eigen::SparseMatrix<double> A(sys.size, sys.size);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) return res;
    res.factor_ok = true;

    Eigen::VectorXd b = Eigen::VectorXd::Zero(sys.size);
    b[pin_row] = 1.0;
    Eigen::VectorXd x = lu.solve(b);

    DensityMatrix out, w1, w2;
    Eigen::VectorXd rhs(sys.size);
    double prev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 8; ++iter) {
        res.rho = unpack_hermitian(sys, x);
        apply_superoperator(s, res.rho, out, w1, w2);
        res.residual = out.norm();
        const double trace_defect = 1.0 - res.rho.trace().real();
        if (res.residual <= 0.3 * target && std::abs(trace_defect) <= 1e-13) {
            res.converged = true;
            break;
        }
        if (res.residual > 0.5 * prev && iter > 0) break;  // stalled
        prev = res.residual;
        for (std::size_t p = 0; p < sys.pairs.size(); ++p) {
            const auto [r, c] = sys.pairs[p];
            rhs[sys.base[p]] = -out(r, c).real();
            if (r != c) rhs[sys.base[p] + 1] = -out(r, c).imag();
        }
        rhs[pin_row] = trace_defect;
        x += lu.solve(rhs);
    }
    if (!res.converged && res.residual <= target) res.converged = true;
    return res;
}

// The generator block-triangularizes over the total photon number: H
// conserves the total, every J^dag J here is diagonal in the product
// basis, and the refill terms J rho J^dag of the loss and detection
// channels move the total strictly down, while only the thermal refill
// (rate n_th G0) moves it up.  Dropping just that up-conversion leaves a
// block-triangular operator M whose diagonal blocks couple only matrix
// elements with equal row and column totals; each block is small enough
// (at most the squared level degeneracy) for an exact sparse LU, and one
// descending sweep then applies M^{-1} exactly.  The neglected up-shift N
// is nilpotent in the grading, so M^{-1} Lt = 1 + M^{-1} N has spectrum
// {1} and an outer Krylov iteration terminates after a handful of steps
// even though plain fixed-point sweeps diverge (the nilpotent part has
// transient gain ~20).  A direct factorization of the full sector system
// needs gigabytes of fill beyond cutoff 3; this stays in level-sized
// pieces.
struct TriangularLadder {
    struct Level {
        std::vector<std::int64_t> states;
        std::vector<Eigen::MatrixXcd> down;  // refill blocks from level+1
        // the factorization keeps a reference to the assembled block, so the
        // block must live as long as the factorization does
        Eigen::SparseMatrix<cplx> block;
        std::unique_ptr<Eigen::UmfPackLU<Eigen::SparseMatrix<cplx>>> lu;
    };
    std::vector<Level> levels;
    std::vector<std::int32_t> level_of, pos_of;
};

inline TriangularLadder build_triangular_ladder(const Superoperator& s) {
    const std::int64_t d = s.basis.dim;
    TriangularLadder P;
    int max_total = 0;
    for (std::int64_t st = 0; st < d; ++st)
        max_total = std::max(max_total, s.totals[static_cast<std::size_t>(st)]);
    P.levels.resize(static_cast<std::size_t>(max_total) + 1);
    P.level_of.resize(static_cast<std::size_t>(d));
    P.pos_of.resize(static_cast<std::size_t>(d));
    for (std::int64_t st = 0; st < d; ++st) {
        auto& lv = P.levels[static_cast<std::size_t>(s.totals[static_cast<std::size_t>(st)])];
        P.level_of[static_cast<std::size_t>(st)] =
            s.totals[static_cast<std::size_t>(st)];
        P.pos_of[static_cast<std::size_t>(st)] =
            static_cast<std::int32_t>(lv.states.size());
        lv.states.push_back(st);
    }

    // total damping per state: diagonal of sum_m J^dag J
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    for (const auto& g : s.jump_gains)
        for (int k = 0; k < g.outerSize(); ++k)
            for (SparseOperator::InnerIterator it(g, k); it; ++it)
                if (it.row() == it.col()) w[it.row()] += it.value().real();

    // photon-total shift of each jump (a: -1, a^dag: +1, n: 0)
    std::vector<int> shift(s.jumps.size(), 0);
    for (std::size_t m = 0; m < s.jumps.size(); ++m)
        for (int k = 0; k < s.jumps[m].outerSize(); ++k) {
            SparseOperator::InnerIterator it(s.jumps[m], k);
            if (it) {
                shift[m] = s.totals[static_cast<std::size_t>(it.row())] -
                           s.totals[static_cast<std::size_t>(it.col())];
                break;
            }
        }

    for (std::size_t t = 0; t < P.levels.size(); ++t) {
        auto& lv = P.levels[t];
        const auto m = static_cast<std::int64_t>(lv.states.size());
        if (m == 0) continue;
        if (t + 1 < P.levels.size()) {
            const auto mu =
                static_cast<std::int64_t>(P.levels[t + 1].states.size());
            for (std::size_t j = 0; j < s.jumps.size(); ++j) {
                if (shift[j] != -1) continue;
                Eigen::MatrixXcd blk = Eigen::MatrixXcd::Zero(m, mu);
                for (int k = 0; k < s.jumps[j].outerSize(); ++k)
                    for (SparseOperator::InnerIterator it(s.jumps[j], k); it; ++it)
                        if (P.level_of[static_cast<std::size_t>(it.row())] ==
                                static_cast<std::int32_t>(t) &&
                            P.level_of[static_cast<std::size_t>(it.col())] ==
                                static_cast<std::int32_t>(t) + 1)
                            blk(P.pos_of[static_cast<std::size_t>(it.row())],
                                P.pos_of[static_cast<std::size_t>(it.col())]) =
                                it.value();
                lv.down.push_back(std::move(blk));
            }
        }

        // within-level generator on vec(X), column-major: -i[H, X] plus the
        // diagonal gain/refill terms (the dephasing refill n X n stays in
        // the level and is entrywise in this basis)
        std::vector<Eigen::Triplet<cplx>> trip;
        trip.reserve(static_cast<std::size_t>(m) * m * 4);
        for (int k = 0; k < s.H.outerSize(); ++k)
            for (SparseOperator::InnerIterator it(s.H, k); it; ++it) {
                if (P.level_of[static_cast<std::size_t>(it.row())] !=
                        static_cast<std::int32_t>(t) ||
                    P.level_of[static_cast<std::size_t>(it.col())] !=
                        static_cast<std::int32_t>(t))
                    continue;
                const std::int64_t pr = P.pos_of[static_cast<std::size_t>(it.row())];
                const std::int64_t pc = P.pos_of[static_cast<std::size_t>(it.col())];
                for (std::int64_t q = 0; q < m; ++q) {
                    trip.emplace_back(pr + m * q, pc + m * q,
                                      cplx(0.0, -1.0) * it.value());
                    trip.emplace_back(q + m * pc, q + m * pr,
                                      cplx(0.0, 1.0) * it.value());
                }
            }
        std::vector<Eigen::VectorXd> within_diag;
        for (std::size_t j = 0; j < s.jumps.size(); ++j) {
            if (shift[j] != 0) continue;
            Eigen::VectorXd dv = Eigen::VectorXd::Zero(m);
            for (int k = 0; k < s.jumps[j].outerSize(); ++k)
                for (SparseOperator::InnerIterator it(s.jumps[j], k); it; ++it)
                    if (it.row() == it.col() &&
                        P.level_of[static_cast<std::size_t>(it.row())] ==
                            static_cast<std::int32_t>(t))
                        dv[P.pos_of[static_cast<std::size_t>(it.row())]] =
                            it.value().real();
            within_diag.push_back(std::move(dv));
        }
        for (std::int64_t pc = 0; pc < m; ++pc)
            for (std::int64_t pr = 0; pr < m; ++pr) {
                double v = -0.5 * (w[lv.states[static_cast<std::size_t>(pr)]] +
                                   w[lv.states[static_cast<std::size_t>(pc)]]);
                for (const auto& dv : within_diag) v += dv[pr] * dv[pc];
                trip.emplace_back(pr + m * pc, pr + m * pc, cplx(v, 0.0));
            }
        lv.block.resize(m * m, m * m);
        lv.block.setFromTriplets(trip.begin(), trip.end());
        lv.block.makeCompressed();
        lv.lu = std::make_unique<Eigen::UmfPackLU<Eigen::SparseMatrix<cplx>>>();
        lv.lu->compute(lv.block);
        if (lv.lu->info() != Eigen::Success)
            throw SingularSolve("ladder level block factorization failed");
    }
    return P;
}

// One sweep of the ladder: X = M^{-1} R, descending in total photon number
// so every loss/detection refill source is already solved when used.
inline void triangular_apply(const TriangularLadder& P, const DensityMatrix& R,
                             DensityMatrix& X,
                             std::vector<Eigen::MatrixXcd>& blocks) {
    const auto n_levels = P.levels.size();
    blocks.resize(n_levels);
    X.setZero(R.rows(), R.cols());
    Eigen::MatrixXcd B;
    for (std::size_t t = n_levels; t-- > 0;) {
        const auto& lv = P.levels[t];
        const auto m = static_cast<Eigen::Index>(lv.states.size());
        if (m == 0) continue;
        B.resize(m, m);
        for (Eigen::Index q = 0; q < m; ++q)
            for (Eigen::Index p = 0; p < m; ++p)
                B(p, q) = R(lv.states[static_cast<std::size_t>(p)],
                            lv.states[static_cast<std::size_t>(q)]);
        if (t + 1 < n_levels)
            for (const auto& Jb : lv.down)
                B.noalias() -= Jb * blocks[t + 1] * Jb.adjoint();
        const Eigen::Map<const Eigen::VectorXcd> bv(B.data(), m * m);
        const Eigen::VectorXcd xv = lv.lu->solve(bv);
        blocks[t] = Eigen::Map<const Eigen::MatrixXcd>(xv.data(), m, m);
        for (Eigen::Index q = 0; q < m; ++q)
            for (Eigen::Index p = 0; p < m; ++p)
                X(lv.states[static_cast<std::size_t>(p)],
                  lv.states[static_cast<std::size_t>(q)]) = blocks[t](p, q);
    }
}

// Frobenius-norm estimate of the generator from its vectorized entries.
inline double liouvillian_frobenius(const Superoperator& s) {
    double sum = 0.0;
    for_each_liouvillian_entry(s, [&](std::int64_t, std::int64_t, cplx w) {
        sum += std::norm(w);
    });
    return std::sqrt(sum);
}

// BiCGSTAB over the real inner-product space of Hermitian matrices, right
// preconditioned by the triangular ladder sweep.  The trace condition
// enters as the rank-one shift Lt(X) = L(X) + sigma tr(X) I/d, which maps
// the steady state to sigma I/d and is nonsingular exactly when the
// kernel of L is one-dimensional.
inline bool steady_state_triangular(const Superoperator& s, double target,
                                    DensityMatrix& x, double& final_residual) {
    const std::int64_t d = s.basis.dim;
    const double sigma = 1.0;
    const auto P = build_triangular_ladder(s);
    std::vector<Eigen::MatrixXcd> blocks;
    DensityMatrix w1, w2;

    const auto apply_shifted = [&](const DensityMatrix& in, DensityMatrix& out) {
        apply_superoperator(s, in, out, w1, w2);
        const double tr = in.trace().real();
        out.diagonal().array() += sigma * tr / static_cast<double>(d);
    };
    const auto dot = [](const DensityMatrix& a, const DensityMatrix& b) {
        return (a.array().conjugate() * b.array()).sum().real();
    };

    DensityMatrix b = DensityMatrix::Zero(d, d);
    b.diagonal().array() = sigma / static_cast<double>(d);

    x = DensityMatrix::Zero(d, d);
    DensityMatrix r = b, rhat = b;
    DensityMatrix p = DensityMatrix::Zero(d, d), v = p;
    DensityMatrix sres, t, phat, shat;
    double rho_old = 1.0, alpha = 1.0, omega = 1.0;
    const double tol = 0.25 * target;
    const double blowup = 1e8 * r.norm();
    double best = r.norm();
    int since_best = 0;
    const int max_iters = 300;
    for (int it = 0; it < max_iters; ++it) {
        const double rho = dot(rhat, r);
        if (std::abs(rho) < 1e-300) break;
        if (it > 0) {
            const double beta = (rho / rho_old) * (alpha / omega);
            p = r + beta * (p - omega * v);
        } else {
            p = r;
        }
        triangular_apply(P, p, phat, blocks);
        apply_shifted(phat, v);
        const double rhv = dot(rhat, v);
        if (std::abs(rhv) < 1e-300) break;
        alpha = rho / rhv;
        sres = r - alpha * v;
        if (sres.norm() <= tol) {
            x += alpha * phat;
            break;
        }
        triangular_apply(P, sres, shat, blocks);
        apply_shifted(shat, t);
        const double tt = dot(t, t);
        if (tt < 1e-300) break;
        omega = dot(t, sres) / tt;
        x += alpha * phat + omega * shat;
        r = sres - omega * t;
        const double rn = r.norm();
        if (rn <= tol || rn > blowup) break;
        if (rn < 0.5 * best) {
            best = rn;
            since_best = 0;
        } else if (++since_best > 40) {
            break;  // stalled; the final residual check decides
        }
        rho_old = rho;
    }
    x = 0.5 * (x + x.adjoint().eval());
    const double tr = x.trace().real();
    if (!(std::abs(tr) > 1e-12)) {
        final_residual = std::numeric_limits<double>::infinity();
        return false;
    }
    x /= tr;
    apply_superoperator(s, x, r, w1, w2);
    final_residual = r.norm();
    return final_residual <= target;
}

}  // namespace detail

// Trace-normalized kernel vector of the generator.  The fast path is the
// ladder-preconditioned Krylov solve, which never forms the vectorized
// system; the degeneracy check (two direct solves of the pinned sector
// system with different pinned rows) is the diagnostic path and scales
// only to moderate cutoffs.  Either way the result is embedded in the full
// basis with exact zeros outside the equal-photon-totals sector.
inline DensityMatrix steady_state(const Superoperator& s,
                                  const SteadyOptions& opts = {}) {
    if (s.jumps.empty())
        throw DegenerateSteadyState("generator has no dissipative part");
    if (s.totals.empty())
        throw InvalidParameter("superoperator carries no photon-total table");
    if (!opts.check_degeneracy) {
        const double target =
            opts.residual_factor * detail::liouvillian_frobenius(s);
        DensityMatrix x;
        double resid = 0.0;
        bool ladder_ok = false;
        try {
            ladder_ok = detail::steady_state_triangular(s, target, x, resid);
        } catch (const SingularSolve&) {
            // a singular level block (e.g. an undriven vacuum) falls back to
            // the pinned direct solve below
        }
        if (ladder_ok) return x;
    }
    const auto sys = detail::build_hermitian_sector(s);
    if (!opts.check_degeneracy && sys.size > 20000)
        throw SingularSolve(
            "ladder iteration stalled and the sector system is too large "
            "for a direct factorization fallback");
    const double target = opts.residual_factor * sys.frob_norm;

    const std::int64_t d = s.basis.dim;
    const std::int64_t candidates[3] = {0, d - 1, d / 2};
    detail::PinnedSolveResult first, second;
    int got = 0;
    for (int k = 0; k < 3 && got < (opts.check_degeneracy ? 2 : 1); ++k) {
        if (k > 0 && candidates[k] == candidates[k - 1]) continue;
        auto r = detail::solve_pinned(s, sys, candidates[k], target);
        if (!r.factor_ok) continue;
        if (!r.converged)
            throw SingularSolve("iterative refinement stalled at residual " +
                                std::to_string(r.residual) + " (target " +
                                std::to_string(target) + ")");
        (got == 0 ? first : second) = std::move(r);
        ++got;
    }
    if (got == 0)
        throw DegenerateSteadyState(
            "pinned linear system is singular for every row choice; the "
            "generator kernel is not one-dimensional");
    if (opts.check_degeneracy) {
        if (got < 2)
            throw DegenerateSteadyState("could not obtain two independent pinned solves");
        const double diff =
            (first.rho - second.rho).cwiseAbs().maxCoeff() /
            (1.0 + first.rho.cwiseAbs().maxCoeff());
        if (diff > 1e-7)
            throw DegenerateSteadyState("independent pinned solves disagree by " +
                                        std::to_string(diff) +
                                        "; kernel dimension exceeds 1");
    }
    return first.rho;
}

// 2 Gdet <n_k> in the given state: the steady-state detection rate.
inline double transmission(const DensityMatrix& rho_ss,
                           const ValidatedNetwork& network,
                           const FockBasis& basis) {
    const auto& det = network.detection();
    double nk = 0.0;
    for (std::int64_t st = 0; st < basis.dim; ++st)
        nk += basis.occupation(st, det.site) * rho_ss(st, st).real();
    return 2.0 * det.gamma_det * nk;
}

}  // namespace natsim
