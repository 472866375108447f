#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "natsim/errors.hpp"

namespace natsim {

struct OdeOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double max_step = 0.0;      // 0 = no cap
    double initial_step = 0.0;  // 0 = choose automatically
    std::uint64_t max_steps = 50'000'000;
};

// Dormand-Prince 5(4) embedded pair with the classic 4th-order continuous
// extension.  Step sizes adapt to the mixed abs/rel error estimate; output
// samples are produced by the dense interpolant, so requesting many sample
// times does not constrain the step sequence.
namespace dp45 {

inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                        a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// 5th-order minus 4th-order weights; h * (e . k) is the local error estimate.
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

// Continuous extension: y(t + s h) = y + h sum_i k_i P_i(s), polynomials in s.
inline void interp_weights(double s, double w[7]) {
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
    w[0] = s - 183.0 / 64 * s2 + 37.0 / 12 * s3 - 145.0 / 128 * s4;
    w[1] = 0.0;
    w[2] = 1500.0 / 371 * s2 - 1000.0 / 159 * s3 + 1000.0 / 371 * s4;
    w[3] = -125.0 / 32 * s2 + 125.0 / 12 * s3 - 375.0 / 64 * s4;
    w[4] = 9477.0 / 3392 * s2 - 729.0 / 106 * s3 + 25515.0 / 6784 * s4;
    w[5] = -11.0 / 7 * s2 + 11.0 / 3 * s3 - 55.0 / 28 * s4;
    w[6] = 3.0 / 2 * s2 - 4.0 * s3 + 5.0 / 2 * s4;
}

}  // namespace dp45

// rhs(t, y, dydt); observe(t, y) is called once per entry of sample_times
// (which must be ascending and lie in [t0, t1]); post_step(t, y) runs after
// every accepted step and may adjust y in place, e.g. to project back onto
// an invariant of the flow that truncation error would otherwise walk away
// from.  On return y holds y(t1).
template <class Vec, class Rhs, class Obs, class PostStep>
void integrate_dp45(Rhs&& rhs, Vec& y, double t0, double t1, const OdeOptions& opt,
                    std::span<const double> sample_times, Obs&& observe,
                    PostStep&& post_step) {
    using namespace dp45;
    const auto n = y.size();
    Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), yerr(n);

    std::size_t next_sample = 0;
    auto emit_exact = [&](double t, const Vec& state) {
        while (next_sample < sample_times.size() && sample_times[next_sample] <= t) {
            observe(sample_times[next_sample], state);
            ++next_sample;
        }
    };
    if (t1 <= t0) {
        emit_exact(t0, y);
        return;
    }
    emit_exact(t0, y);  // samples at (or numerically before) the start

    rhs(t0, y, k1);
    double t = t0;
    double h = opt.initial_step;
    if (h <= 0.0) {
        const double ynorm = y.norm();
        const double fnorm = k1.norm();
        h = (fnorm > 1e-12) ? 0.01 * std::max(ynorm, 1.0) / fnorm : 1e-3;
    }
    h = std::min(h, t1 - t0);
    if (opt.max_step > 0.0) h = std::min(h, opt.max_step);

    std::uint64_t steps = 0;
    while (t < t1) {
        if (++steps > opt.max_steps)
            throw StepSizeUnderflow("step budget exhausted at t=" + std::to_string(t));
        h = std::min(h, t1 - t);
        const double hmin = 16.0 * std::numeric_limits<double>::epsilon() *
                            std::max(std::abs(t), 1.0);
        if (h < hmin)
            throw StepSizeUnderflow("step size " + std::to_string(h) + " below " +
                                    std::to_string(hmin) + " at t=" +
                                    std::to_string(t));

        ytmp = y + h * (a21 * k1);
        rhs(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        rhs(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        rhs(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        rhs(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        rhs(t + h, ytmp, k6);
        ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        rhs(t + h, ynew, k7);
        yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double err2 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double scale =
                opt.abs_tol +
                opt.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            const double r = std::abs(yerr[i]) / scale;
            err2 += r * r;
        }
        const double err = std::sqrt(err2 / static_cast<double>(n));

        if (err <= 1.0) {
            // dense output for samples inside (t, t+h]
            while (next_sample < sample_times.size() &&
                   sample_times[next_sample] <= t + h + hmin) {
                const double ts = std::min(sample_times[next_sample], t + h);
                double w[7];
                interp_weights(std::clamp((ts - t) / h, 0.0, 1.0), w);
                ytmp = y + h * (w[0] * k1 + w[2] * k3 + w[3] * k4 + w[4] * k5 +
                                w[5] * k6 + w[6] * k7);
                observe(sample_times[next_sample], ytmp);
                ++next_sample;
            }
            t += h;
            y.swap(ynew);
            k1.swap(k7);  // first-same-as-last
            // an O(eps) projection leaves the FSAL derivative usable
            post_step(t, y);
        }
        double factor = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
        factor = std::clamp(factor, 0.2, 5.0);
        h *= factor;
        if (opt.max_step > 0.0) h = std::min(h, opt.max_step);
    }
    emit_exact(t1, y);  // catch samples at exactly t1 (and any stragglers)
}

template <class Vec, class Rhs, class Obs>
void integrate_dp45(Rhs&& rhs, Vec& y, double t0, double t1, const OdeOptions& opt,
                    std::span<const double> sample_times, Obs&& observe) {
    integrate_dp45(std::forward<Rhs>(rhs), y, t0, t1, opt, sample_times,
                   std::forward<Obs>(observe), [](double, Vec&) {});
}

}  // namespace natsim
