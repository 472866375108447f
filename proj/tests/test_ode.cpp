#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "natsim/ode.hpp"

using namespace natsim;
using Catch::Approx;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
    return v;
}

}  // namespace

TEST_CASE("exponential decay integrates to the analytic solution") {
    Eigen::VectorXd y(1);
    y[0] = 1.0;
    auto rhs = [](double, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx[0] = -x[0];
    };
    const auto samples = linspace(0.0, 10.0, 101);
    double worst = 0.0;
    auto observe = [&](double t, const Eigen::VectorXd& x) {
        worst = std::max(worst, std::abs(x[0] - std::exp(-t)));
    };
    OdeOptions opt;
    opt.rel_tol = 1e-10;
    opt.abs_tol = 1e-12;
    integrate_dp45(rhs, y, 0.0, 10.0, opt, samples, observe);
    REQUIRE(worst < 1e-8);
    REQUIRE(y[0] == Approx(std::exp(-10.0)).epsilon(1e-8));
}

TEST_CASE("harmonic oscillator keeps its energy") {
    Eigen::VectorXd y(2);
    y[0] = 1.0;
    y[1] = 0.0;
    auto rhs = [](double, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx[0] = x[1];
        dx[1] = -x[0];
    };
    OdeOptions opt;
    opt.rel_tol = 1e-10;
    opt.abs_tol = 1e-12;
    const std::vector<double> none;
    integrate_dp45(rhs, y, 0.0, 20.0 * M_PI, opt, none, [](double, const Eigen::VectorXd&) {});
    REQUIRE(y[0] * y[0] + y[1] * y[1] == Approx(1.0).epsilon(1e-7));
    REQUIRE(y[0] == Approx(1.0).margin(1e-6));  // ten full periods
}

TEST_CASE("dense output hits interior sample times accurately") {
    // samples never line up with step endpoints, so they exercise the
    // interpolant rather than the step states
    Eigen::VectorXd y(1);
    y[0] = 1.0;
    auto rhs = [](double t, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx[0] = std::cos(t) * x[0];
    };
    std::vector<double> samples;
    for (int k = 0; k < 40; ++k) samples.push_back(0.1 + 0.237 * k);
    double worst = 0.0;
    auto observe = [&](double t, const Eigen::VectorXd& x) {
        worst = std::max(worst, std::abs(x[0] - std::exp(std::sin(t))));
    };
    OdeOptions opt;
    opt.rel_tol = 1e-9;
    opt.abs_tol = 1e-11;
    integrate_dp45(rhs, y, 0.0, 10.0, opt, samples, observe);
    REQUIRE(worst < 1e-7);
}

TEST_CASE("sample times at both ends are emitted exactly once") {
    Eigen::VectorXd y(1);
    y[0] = 2.0;
    auto rhs = [](double, const Eigen::VectorXd&, Eigen::VectorXd& dx) { dx[0] = 1.0; };
    const std::vector<double> samples{0.0, 0.5, 1.0};
    std::vector<double> seen;
    integrate_dp45(rhs, y, 0.0, 1.0, OdeOptions{}, samples,
                   [&](double t, const Eigen::VectorXd&) { seen.push_back(t); });
    REQUIRE(seen == samples);
}

TEST_CASE("tighter tolerance buys smaller error") {
    auto run = [](double tol) {
        Eigen::VectorXd y(2);
        y[0] = 1.0;
        y[1] = 0.0;
        auto rhs = [](double, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
            dx[0] = x[1];
            dx[1] = -x[0];
        };
        OdeOptions opt;
        opt.rel_tol = tol;
        opt.abs_tol = tol * 1e-2;
        const std::vector<double> none;
        integrate_dp45(rhs, y, 0.0, 10.0, opt, none,
                       [](double, const Eigen::VectorXd&) {});
        return std::abs(y[0] - std::cos(10.0));
    };
    const double loose = run(1e-5);
    const double tight = run(1e-9);
    REQUIRE(tight < loose);
    REQUIRE(tight < 1e-7);
}

TEST_CASE("max_step is honored") {
    Eigen::VectorXd y(1);
    y[0] = 1.0;
    double largest = 0.0, prev_t = 0.0;
    auto rhs = [](double, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx[0] = -0.01 * x[0];  // so slow the controller would take huge steps
    };
    OdeOptions opt;
    opt.max_step = 0.25;
    const std::vector<double> none;
    integrate_dp45(rhs, y, 0.0, 10.0, opt, none, [](double, const Eigen::VectorXd&) {},
                   [&](double t, Eigen::VectorXd&) {
                       largest = std::max(largest, t - prev_t);
                       prev_t = t;
                   });
    REQUIRE(largest <= 0.25 + 1e-12);
}

TEST_CASE("post_step edits feed back into the integration") {
    // clamp the state onto the unit circle after every accepted step; the
    // final state must sit exactly on the invariant
    Eigen::VectorXd y(2);
    y[0] = 1.0;
    y[1] = 0.0;
    auto rhs = [](double, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx[0] = x[1];
        dx[1] = -x[0];
    };
    bool called = false;
    auto project = [&](double, Eigen::VectorXd& x) {
        called = true;
        x /= std::hypot(x[0], x[1]);
    };
    OdeOptions opt;
    opt.rel_tol = 1e-6;
    const std::vector<double> none;
    integrate_dp45(rhs, y, 0.0, 30.0, opt, none, [](double, const Eigen::VectorXd&) {},
                   project);
    REQUIRE(called);
    REQUIRE(std::hypot(y[0], y[1]) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("exhausted step budget reports stiffness") {
    Eigen::VectorXd y(1);
    y[0] = 1.0;
    auto rhs = [](double, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx[0] = -x[0];
    };
    OdeOptions opt;
    opt.max_steps = 3;
    const std::vector<double> none;
    REQUIRE_THROWS_AS(
        integrate_dp45(rhs, y, 0.0, 100.0, opt, none,
                       [](double, const Eigen::VectorXd&) {}),
        StepSizeUnderflow);
}

TEST_CASE("zero-length integration emits the initial state") {
    Eigen::VectorXd y(1);
    y[0] = 7.0;
    const std::vector<double> samples{0.0};
    int count = 0;
    integrate_dp45([](double, const Eigen::VectorXd&, Eigen::VectorXd& dx) { dx[0] = 1; },
                   y, 0.0, 0.0, OdeOptions{}, samples,
                   [&](double, const Eigen::VectorXd& x) {
                       ++count;
                       REQUIRE(x[0] == 7.0);
                   });
    REQUIRE(count == 1);
}
