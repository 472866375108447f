#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "natsim/errors.hpp"
#include "natsim/lindblad.hpp"
#include "natsim/moments.hpp"
#include "natsim/network.hpp"
#include "natsim/version.hpp"

namespace natsim {

enum class Engine { Fock, Moments, Both };

inline std::string to_string(Engine e) {
    switch (e) {
        case Engine::Fock: return "fock";
        case Engine::Moments: return "moments";
        case Engine::Both: return "both";
    }
    return "?";
}

inline Engine engine_from_string(const std::string& s) {
    if (s == "fock") return Engine::Fock;
    if (s == "moments") return Engine::Moments;
    if (s == "both") return Engine::Both;
    throw ConfigParseError("unknown engine '" + s + "'");
}

struct SweepSpec {
    InterferenceMode mode = InterferenceMode::Constructive;
    std::vector<double> disorder_grid;
    std::vector<double> dephasing_grid;
    Engine engine = Engine::Moments;
    int cutoff = 3;
    std::optional<std::array<double, 4>> couplings;
};

inline std::vector<double> default_disorder_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 8; ++k) g.push_back(0.25 * k);
    return g;
}

inline std::vector<double> default_dephasing_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 10; ++k) g.push_back(0.1 * k);
    return g;
}

// The site-2 detuning range the sweep machinery is validated for; wider than
// the default grid to cover the high-disorder runs and ensemble windows.
inline constexpr double kMaxAbsDisorder = 3.0;

inline void validate_sweep_spec(const SweepSpec& spec) {
    if (spec.disorder_grid.empty()) throw InvalidParameter("disorder_grid (empty)");
    if (spec.dephasing_grid.empty()) throw InvalidParameter("dephasing_grid (empty)");
    for (double w : spec.disorder_grid)
        if (!std::isfinite(w) || std::abs(w) > kMaxAbsDisorder)
            throw InvalidParameter("disorder_grid value " + std::to_string(w) +
                                   " outside the supported range");
    for (double g : spec.dephasing_grid)
        if (!std::isfinite(g) || g < 0.0)
            throw NegativeRate("dephasing_grid value " + std::to_string(g));
    if (spec.cutoff < 1) throw InvalidParameter("cutoff (must be >= 1)");
}

struct TransmissionCurve {
    std::vector<double> abscissa;
    std::vector<double> raw;
    std::vector<double> normalized;
    json metadata;
};

// Steady transmission of the standard four-site network at one parameter
// point.  The fock path solves in the conserved sector without the repeated
// pinned-row degeneracy probe: uniqueness is guaranteed up front by the
// drain-reachability check on the coupling graph.
inline double point_transmission(InterferenceMode mode, double omega2,
                                 double gamma2, Engine engine, int cutoff,
                                 const std::optional<std::array<double, 4>>&
                                     couplings = std::nullopt) {
    const ValidatedNetwork net =
        validate_network(standard_four_site(mode, omega2, gamma2, couplings));
    if (engine == Engine::Moments) {
        const MomentGenerator gen = build_moment_generator(net);
        return transmission_from_moments(steady_moments(gen), net);
    }
    if (!net.all_sites_drain())
        throw DegenerateSteadyState("network has sites with no dissipative path");
    const FockBasis basis = build_basis(net.n_sites(), cutoff);
    const Superoperator liou = build_liouvillian(net, basis);
    SteadyOptions opts;
    opts.check_degeneracy = false;
    return transmission(steady_state(liou, opts), net, basis);
}

// Constructive-mode transmission at zero disorder and zero dephasing: the
// normalization point for every curve.  Cached per (engine, cutoff,
// couplings); the cache never mixes engines.
inline double baseline_transmission(Engine engine, int cutoff = 3,
                                    const std::optional<std::array<double, 4>>&
                                        couplings = std::nullopt) {
    if (engine == Engine::Both)
        throw InvalidParameter("baseline_transmission needs a single engine");
    using Key = std::tuple<int, int, double, double, double, double>;
    static std::map<Key, double> cache;
    static std::mutex mutex;
    const std::array<double, 4> g = couplings.value_or(kDefaultCouplings);
    const Key key{static_cast<int>(engine), cutoff, g[0], g[1], g[2], g[3]};
    {
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    const double value = point_transmission(InterferenceMode::Constructive, 0.0,
                                            0.0, engine, cutoff, couplings);
    std::lock_guard<std::mutex> lock(mutex);
    cache.emplace(key, value);
    return value;
}

namespace detail {

inline json sweep_metadata(const SweepSpec& spec, const std::string& sweep_kind,
                           double fixed_value, double baseline, Engine engine) {
    json meta;
    meta["sweep"] = sweep_kind;
    meta["mode"] = to_string(spec.mode);
    meta["fixed_" + std::string(sweep_kind == "dephasing" ? "disorder"
                                                          : "dephasing")] =
        fixed_value;
    meta["disorder_grid"] = spec.disorder_grid;
    meta["dephasing_grid"] = spec.dephasing_grid;
    meta["engine"] = to_string(engine);
    meta["cutoff"] = spec.cutoff;
    meta["couplings"] = spec.couplings.value_or(kDefaultCouplings);
    meta["baseline"] = baseline;
    meta["version"] = kVersion;
    return meta;
}

template <class PointFn>
TransmissionCurve make_curve(const SweepSpec& spec, const std::string& kind,
                             double fixed_value,
                             const std::vector<double>& abscissa, Engine engine,
                             PointFn&& point) {
    const double base = baseline_transmission(engine, spec.cutoff, spec.couplings);
    TransmissionCurve curve;
    curve.abscissa = abscissa;
    curve.raw.resize(abscissa.size());
    curve.normalized.resize(abscissa.size());
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
        curve.raw[i] = point(abscissa[i]);
        curve.normalized[i] = curve.raw[i] / base;
    }
    curve.metadata = sweep_metadata(spec, kind, fixed_value, base, engine);
    return curve;
}

}  // namespace detail

// One dephasing curve per disorder value.  With engine = Both the fock curve
// is returned and the moments values ride along in metadata together with the
// largest relative disagreement.
inline std::vector<TransmissionCurve> sweep_dephasing(const SweepSpec& spec) {
    validate_sweep_spec(spec);
    std::vector<TransmissionCurve> curves;
    for (double w2 : spec.disorder_grid) {
        const Engine primary =
            (spec.engine == Engine::Both) ? Engine::Fock : spec.engine;
        TransmissionCurve curve = detail::make_curve(
            spec, "dephasing", w2, spec.dephasing_grid, primary, [&](double g2) {
                return point_transmission(spec.mode, w2, g2, primary, spec.cutoff,
                                          spec.couplings);
            });
        if (spec.engine == Engine::Both) {
            std::vector<double> mraw;
            double worst = 0.0;
            for (double g2 : spec.dephasing_grid) {
                const double tm = point_transmission(spec.mode, w2, g2,
                                                     Engine::Moments, spec.cutoff,
                                                     spec.couplings);
                mraw.push_back(tm);
                worst = std::max(worst,
                                 std::abs(curve.raw[mraw.size() - 1] - tm) / tm);
            }
            curve.metadata["moments_raw"] = mraw;
            curve.metadata["max_rel_engine_gap"] = worst;
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

// One disorder curve per dephasing value.
inline std::vector<TransmissionCurve> sweep_disorder(const SweepSpec& spec) {
    validate_sweep_spec(spec);
    std::vector<TransmissionCurve> curves;
    for (double g2 : spec.dephasing_grid) {
        const Engine primary =
            (spec.engine == Engine::Both) ? Engine::Fock : spec.engine;
        TransmissionCurve curve = detail::make_curve(
            spec, "disorder", g2, spec.disorder_grid, primary, [&](double w2) {
                return point_transmission(spec.mode, w2, g2, primary, spec.cutoff,
                                          spec.couplings);
            });
        if (spec.engine == Engine::Both) {
            std::vector<double> mraw;
            double worst = 0.0;
            for (double w2 : spec.disorder_grid) {
                const double tm = point_transmission(spec.mode, w2, g2,
                                                     Engine::Moments, spec.cutoff,
                                                     spec.couplings);
                mraw.push_back(tm);
                worst = std::max(worst,
                                 std::abs(curve.raw[mraw.size() - 1] - tm) / tm);
            }
            curve.metadata["moments_raw"] = mraw;
            curve.metadata["max_rel_engine_gap"] = worst;
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

// Software analogue of averaging transmissions over a window of static
// detunings: gamma_2 = 0, omega_2 drawn from [delta0 - width/2, delta0 +
// width/2] on a uniform grid (or uniformly at random when a seed is given).
inline double ensemble_average_transmission(
    InterferenceMode mode, double delta0, double width, int samples,
    Engine engine, int cutoff = 3,
    const std::optional<std::array<double, 4>>& couplings = std::nullopt,
    std::optional<std::uint64_t> seed = std::nullopt) {
    if (width < 0.0) throw InvalidParameter("width");
    if (samples < 1) throw InvalidParameter("samples");
    std::vector<double> points;
    if (seed.has_value()) {
        std::mt19937_64 rng(*seed);
        std::uniform_real_distribution<double> dist(delta0 - width / 2.0,
                                                    delta0 + width / 2.0);
        for (int i = 0; i < samples; ++i)
            points.push_back(width == 0.0 ? delta0 : dist(rng));
    } else if (samples == 1 || width == 0.0) {
        points.assign(static_cast<std::size_t>(samples), delta0);
    } else {
        for (int i = 0; i < samples; ++i)
            points.push_back(delta0 - width / 2.0 +
                             width * static_cast<double>(i) / (samples - 1));
    }
    double sum = 0.0;
    for (double w2 : points)
        sum += point_transmission(mode, w2, 0.0, engine, cutoff, couplings);
    return sum / static_cast<double>(samples);
}

// Interior-maximum detector on the normalized curve.  The peak must beat both
// endpoints by the significance margin, expressed in baseline units (the
// normalized scale), to rule out solver noise; ties resolve to the smaller
// abscissa because the scan keeps the first maximal value.
inline std::optional<std::pair<double, double>> detect_nat_peak(
    const TransmissionCurve& curve, double margin = 0.01) {
    const std::size_t n = curve.normalized.size();
    if (n < 3) throw TooFewPoints("curve has " + std::to_string(n) + " points");
    std::size_t am = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (curve.normalized[i] > curve.normalized[am]) am = i;
    if (am == 0 || am == n - 1) return std::nullopt;
    if (curve.normalized[am] <= curve.normalized[0] + margin ||
        curve.normalized[am] <= curve.normalized[n - 1] + margin)
        return std::nullopt;
    return std::make_pair(curve.abscissa[am], curve.normalized[am]);
}

struct TransientFit {
    double rate = 0.0;       // b in a(1 - e^{-bt})
    double amplitude = 0.0;  // a
    double r2 = 0.0;
};

// Separable least squares for f(t) ~ a (1 - e^{-b t}): for fixed b the
// optimal a is closed-form, so only b is searched (coarse log-spaced scan,
// then golden-section refinement).
inline TransientFit fit_saturating_exponential(std::span<const double> times,
                                               std::span<const double> values) {
    const std::size_t n = times.size();
    if (n < 4 || values.size() != n)
        throw InsufficientData("need at least 4 samples to fit");
    auto sse_for = [&](double b, double* a_out) {
        double sgg = 0.0, svg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = 1.0 - std::exp(-b * times[i]);
            sgg += g * g;
            svg += values[i] * g;
        }
        const double a = (sgg > 0.0) ? svg / sgg : 0.0;
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = values[i] - a * (1.0 - std::exp(-b * times[i]));
            sse += r * r;
        }
        if (a_out) *a_out = a;
        return sse;
    };
    double best_lb = 0.0, best_sse = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 100; ++k) {
        const double lb = -3.0 + 5.0 * k / 100.0;  // b in [1e-3, 1e2]
        const double sse = sse_for(std::pow(10.0, lb), nullptr);
        if (sse < best_sse) {
            best_sse = sse;
            best_lb = lb;
        }
    }
    double lo = best_lb - 0.05, hi = best_lb + 0.05;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = sse_for(std::pow(10.0, x1), nullptr);
    double f2 = sse_for(std::pow(10.0, x2), nullptr);
    for (int it = 0; it < 120 && hi - lo > 1e-13; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = sse_for(std::pow(10.0, x1), nullptr);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = sse_for(std::pow(10.0, x2), nullptr);
        }
    }
    TransientFit fit;
    fit.rate = std::pow(10.0, (lo + hi) / 2.0);
    const double sse = sse_for(fit.rate, &fit.amplitude);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += values[i];
    mean /= static_cast<double>(n);
    double sst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        sst += (values[i] - mean) * (values[i] - mean);
    fit.r2 = (sst > 0.0) ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
    return fit;
}

// Fits the sink occupation's rise toward its steady value over the window
// before it first reaches 95% of that value.
inline TransientFit transient_fit(const Trajectory& traj) {
    const std::size_t n = traj.times.size();
    if (n < 16) throw NoTransientWindow("trajectory too short");
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i)
        vals[i] = traj.occupations(static_cast<Eigen::Index>(i),
                                   traj.detection_site);
    const double nss = vals.back();
    if (!(nss > 0.0)) throw NoTransientWindow("sink occupation never rises");
    std::size_t iw = n;
    for (std::size_t i = 0; i < n; ++i)
        if (vals[i] >= 0.95 * nss) {
            iw = i;
            break;
        }
    if (iw < 8)
        throw NoTransientWindow(
            "sink occupation is already within 5% of steady at the start");
    return fit_saturating_exponential(
        std::span<const double>(traj.times.data(), iw + 1),
        std::span<const double>(vals.data(), iw + 1));
}

}  // namespace natsim
