#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "natsim/errors.hpp"
#include "natsim/network.hpp"

namespace natsim {

using cplx = std::complex<double>;
using SparseOperator = Eigen::SparseMatrix<cplx>;

// Truncated product Fock space with a uniform per-site photon cutoff.
// Product states are enumerated with site 0 slowest-varying: the state index
// decomposes as sum_i occ_i * (cutoff+1)^(n_sites-1-i).
struct FockBasis {
    int n_sites = 0;
    int cutoff = 0;
    std::int64_t dim = 0;

    int levels() const { return cutoff + 1; }

    std::int64_t stride(int site) const {
        std::int64_t s = 1;
        for (int k = site + 1; k < n_sites; ++k) s *= levels();
        return s;
    }

    int occupation(std::int64_t state, int site) const {
        return static_cast<int>((state / stride(site)) % levels());
    }
};

inline std::uint64_t superoperator_entry_cap() {
    if (const char* env = std::getenv("NAT_SIM_MAX_DIM")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && v > 0) return v;
        throw ConfigParseError("NAT_SIM_MAX_DIM must be a positive integer");
    }
    return std::uint64_t{1} << 20;
}

// The cap protects the vectorized (density-matrix) side: a Hilbert dimension d
// costs d^2 scalar unknowns once the master equation is vectorized, and that
// square is what must stay below the cap.  Past it, the moment engine is the
// only practical option.
inline FockBasis build_basis(int n_sites, int cutoff) {
    if (n_sites < 1) throw InvalidParameter("n_sites");
    if (cutoff < 1) throw InvalidParameter("cutoff");
    const std::uint64_t cap = superoperator_entry_cap();
    std::uint64_t dim = 1;
    for (int i = 0; i < n_sites; ++i) {
        dim *= static_cast<std::uint64_t>(cutoff) + 1;
        if (dim > (std::uint64_t{1} << 31) || dim * dim > cap)
            throw Overflow(
                "state space " + std::to_string(n_sites) + " sites at cutoff " +
                std::to_string(cutoff) +
                " exceeds the vectorized-size cap (dim^2 > " + std::to_string(cap) +
                "); raise NAT_SIM_MAX_DIM or switch to the moments engine");
    }
    return FockBasis{n_sites, cutoff, static_cast<std::int64_t>(dim)};
}

// a_site: sqrt(n) lowering on one tensor factor, identity on the rest.
inline SparseOperator site_annihilator(const FockBasis& basis, int site) {
    if (site < 0 || site >= basis.n_sites) throw IndexOutOfRange("site " + std::to_string(site));
    const std::int64_t stride = basis.stride(site);
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<std::size_t>(basis.dim));
    for (std::int64_t s = 0; s < basis.dim; ++s) {
        const int n = basis.occupation(s, site);
        if (n > 0) trip.emplace_back(s - stride, s, std::sqrt(static_cast<double>(n)));
    }
    SparseOperator a(basis.dim, basis.dim);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();
    return a;
}

// n_site = a^dag a: diagonal occupation of one site.
inline SparseOperator site_number(const FockBasis& basis, int site) {
    if (site < 0 || site >= basis.n_sites) throw IndexOutOfRange("site " + std::to_string(site));
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<std::size_t>(basis.dim));
    for (std::int64_t s = 0; s < basis.dim; ++s) {
        const int n = basis.occupation(s, site);
        if (n > 0) trip.emplace_back(s, s, static_cast<double>(n));
    }
    SparseOperator op(basis.dim, basis.dim);
    op.setFromTriplets(trip.begin(), trip.end());
    op.makeCompressed();
    return op;
}

// Total photon number of every basis state; conserved by the Hamiltonian and
// shifted by +-1 (or 0) by each jump operator, which is what lets the steady
// state be solved in the equal-row/column-total sector.
inline std::vector<int> photon_totals(const FockBasis& basis) {
    std::vector<int> tot(static_cast<std::size_t>(basis.dim), 0);
    for (std::int64_t s = 0; s < basis.dim; ++s) {
        int sum = 0;
        for (int i = 0; i < basis.n_sites; ++i) sum += basis.occupation(s, i);
        tot[static_cast<std::size_t>(s)] = sum;
    }
    return tot;
}

// H = sum_i omega_i n_i + sum_{(i,j)} g_ij (a_i^dag a_j + a_i a_j^dag),
// assembled state-by-state from occupation arithmetic.
inline SparseOperator hamiltonian_matrix(const ValidatedNetwork& network,
                                         const FockBasis& basis) {
    if (network.n_sites() != basis.n_sites)
        throw DimensionMismatch("network has " + std::to_string(network.n_sites()) +
                                " sites, basis has " + std::to_string(basis.n_sites));
    std::vector<Eigen::Triplet<cplx>> trip;
    const auto& omega = network.omega();
    for (std::int64_t s = 0; s < basis.dim; ++s) {
        double diag = 0.0;
        for (int i = 0; i < basis.n_sites; ++i)
            diag += omega[i] * basis.occupation(s, i);
        if (diag != 0.0) trip.emplace_back(s, s, diag);
        for (const auto& c : network.couplings()) {
            if (c.g == 0.0) continue;
            // hop j -> i: a_i^dag a_j moves one photon, amplitude sqrt(n_j (n_i+1))
            for (const auto [from, to] : {std::pair{c.j, c.i}, std::pair{c.i, c.j}}) {
                const int nf = basis.occupation(s, from);
                const int nt = basis.occupation(s, to);
                if (nf > 0 && nt < basis.cutoff) {
                    const std::int64_t target = s - basis.stride(from) + basis.stride(to);
                    trip.emplace_back(target, s, c.g * std::sqrt(double(nf) * (nt + 1)));
                }
            }
        }
    }
    SparseOperator h(basis.dim, basis.dim);
    h.setFromTriplets(trip.begin(), trip.end());
    h.makeCompressed();
    return h;
}

}  // namespace natsim
