#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "natsim/errors.hpp"
#include "natsim/experiments.hpp"
#include "natsim/lindblad.hpp"
#include "natsim/moments.hpp"
#include "natsim/network.hpp"

namespace natsim {

struct ScalingReport {
    std::string engine;  // "fock" | "moments"
    std::string model;   // "exponential" | "polynomial"
    int cutoff = 3;
    int repetitions = 3;
    std::vector<int> sizes;
    std::vector<double> state_dims;      // Hilbert dimension (fock) or n (moments)
    std::vector<double> vectorized_dims; // squared side: the linear-algebra cost driver
    std::vector<double> median_seconds;  // NaN where the size is infeasible
    std::vector<double> spread_seconds;  // max - min over repetitions
    std::vector<std::string> notes;      // per-size remarks (e.g. overflow text)
    std::string environment;
};

struct ScalingFit {
    std::string model;
    double slope = 0.0;
    double intercept = 0.0;
    double goodness = 0.0;  // coefficient of determination on the fitted scale
};

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string machine_descriptor() {
    std::string s = "eigen ";
    s += std::to_string(EIGEN_WORLD_VERSION) + "." +
         std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
#if defined(__VERSION__)
    s += ", compiler " __VERSION__;
#endif
    return s;
}

}  // namespace detail

// Times one fixed-duration evolution (t = 5 coupling times, vacuum start,
// tolerance 1e-8) of an open chain per repetition, after one discarded
// warm-up run.  Runs execute serially; only the scaling shape is meaningful,
// absolute times are machine-dependent.
inline ScalingReport complexity_benchmark(Engine engine,
                                          const std::vector<int>& sizes,
                                          int cutoff = 3, int repetitions = 3) {
    if (engine == Engine::Both)
        throw InvalidParameter("complexity_benchmark needs a single engine");
    if (repetitions < 3) throw InvalidParameter("repetitions (must be >= 3)");
    if (sizes.empty()) throw InvalidParameter("sizes (empty)");
    for (std::size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i] <= sizes[i - 1])
            throw InvalidParameter("sizes (must be strictly increasing)");

    constexpr double kDuration = 5.0;
    constexpr double kTol = 1e-8;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    ScalingReport rep;
    rep.engine = to_string(engine);
    rep.model = (engine == Engine::Fock) ? "exponential" : "polynomial";
    rep.cutoff = cutoff;
    rep.repetitions = repetitions;
    rep.sizes = sizes;
    rep.environment = detail::machine_descriptor();

    for (int n : sizes) {
        const ValidatedNetwork net = validate_network(chain_network(n));
        const double hilbert = std::pow(static_cast<double>(cutoff) + 1.0, n);
        std::vector<double> times;
        std::string note;
        if (engine == Engine::Fock) {
            rep.state_dims.push_back(hilbert);
            rep.vectorized_dims.push_back(hilbert * hilbert);
            try {
                const FockBasis basis = build_basis(n, cutoff);
                const Superoperator liou = build_liouvillian(net, basis);
                const DensityMatrix rho0 = vacuum_density(basis);
                evolve(liou, rho0, kDuration, kTol);  // warm-up, discarded
                for (int r = 0; r < repetitions; ++r) {
                    const auto t0 = std::chrono::steady_clock::now();
                    evolve(liou, rho0, kDuration, kTol);
                    const auto t1 = std::chrono::steady_clock::now();
                    times.push_back(std::chrono::duration<double>(t1 - t0).count());
                }
            } catch (const Overflow& e) {
                note = e.what();
            }
        } else {
            rep.state_dims.push_back(n);
            rep.vectorized_dims.push_back(static_cast<double>(n) * n);
            const MomentGenerator gen = build_moment_generator(net);
            const MomentMatrix C0 = MomentMatrix::Zero(n, n);
            evolve_moments(gen, C0, kDuration, kTol);  // warm-up, discarded
            for (int r = 0; r < repetitions; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                evolve_moments(gen, C0, kDuration, kTol);
                const auto t1 = std::chrono::steady_clock::now();
                times.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
        }
        if (times.empty()) {
            rep.median_seconds.push_back(nan);
            rep.spread_seconds.push_back(nan);
        } else {
            rep.median_seconds.push_back(detail::median_of(times));
            rep.spread_seconds.push_back(
                *std::max_element(times.begin(), times.end()) -
                *std::min_element(times.begin(), times.end()));
        }
        rep.notes.push_back(note);
    }
    return rep;
}

// Least-squares line through (N, ln t) for the exponential model or
// (ln N, ln t) for the polynomial one; goodness is R^2 on that scale.
inline ScalingFit scaling_fit(const ScalingReport& report) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < report.sizes.size(); ++i) {
        const double t = report.median_seconds[i];
        if (!std::isfinite(t) || t <= 0.0) continue;
        xs.push_back(report.model == "polynomial"
                         ? std::log(static_cast<double>(report.sizes[i]))
                         : static_cast<double>(report.sizes[i]));
        ys.push_back(std::log(t));
    }
    const std::size_t n = xs.size();
    if (n < 3)
        throw InsufficientData("need >= 3 finite timings, have " +
                               std::to_string(n));
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    ScalingFit fit;
    fit.model = report.model;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        sse += r * r;
    }
    fit.goodness = (syy > 0.0) ? 1.0 - sse / syy : 1.0;
    return fit;
}

}  // namespace natsim
