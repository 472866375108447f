// Command-line front end: binds JSON run configs to the engines and writes
// plot-ready CSV/JSON artifacts.  Every artifact embeds the resolved config
// (everything that influences content; output paths and worker counts are
// execution knobs and deliberately excluded), so feeding an artifact's
// resolved_config back through the same subcommand reproduces it byte for
// byte.
//
// Exit codes: 0 success, 2 config parse error, 3 validation error,
// 4 solver error, 1 anything else.  Failures print a single-line JSON
// error report to stderr.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "natsim/io.hpp"

namespace fs = std::filesystem;
using namespace natsim;

namespace {

// One shared value block for all subcommands; only the parsed subcommand
// writes to it, and flag presence is queried through that subcommand's
// count() afterwards.
struct Options {
    std::string config_path;
    std::string mode = "constructive", engine = "moments", out;
    double disorder = 0.0, dephasing = 0.0, tol = 1e-8, t_final = 200.0;
    double center = 0.0, width = 0.0;
    int cutoff = 3, workers = 0, samples = 21, repetitions = 3;
    std::uint64_t seed = 0;
    std::vector<int> sizes;
    const CLI::App* parsed = nullptr;

    bool given(const char* flag) const {
        return parsed != nullptr && parsed->count(flag) > 0;
    }
};

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config_path,
                    "JSON run config; command-line flags override its keys");
    sub->add_option("--mode", o.mode,
                    "standard four-site interference arm sign: "
                    "constructive|destructive");
    sub->add_option("--disorder", o.disorder,
                    "site-2 detuning of the standard network");
    sub->add_option("--dephasing", o.dephasing,
                    "site-2 dephasing rate of the standard network");
    sub->add_option("--engine", o.engine, "fock|moments|both");
    sub->add_option("--cutoff", o.cutoff,
                    "per-site Fock truncation (fock engine)");
    sub->add_option("--out", o.out,
                    "output directory (default runs/<stamp>-<command>)");
    sub->add_option("--workers", o.workers,
                    "sweep worker threads (default: available cores)");
    sub->add_option("--seed", o.seed, "RNG seed for random ensemble sampling");
    sub->add_option("--tol", o.tol, "ODE tolerance for time evolution");
    sub->add_option("--t-final", o.t_final, "evolution horizon (simulate)");
    sub->add_option("--center", o.center, "ensemble window center detuning");
    sub->add_option("--width", o.width, "ensemble window full width");
    sub->add_option("--samples", o.samples, "ensemble sample count");
    sub->add_option("--sizes", o.sizes, "benchmark network sizes (bench)");
    sub->add_option("--repetitions", o.repetitions,
                    "benchmark repetitions per size (bench)");
}

// Layered resolution: built-in defaults, then the config file, then any flag
// given on the command line.  The result is the normalized config embedded
// in artifacts.
json resolve_config(const std::string& command, const Options& o) {
    json cfg;
    if (!o.config_path.empty()) cfg = read_json_file(o.config_path);
    if (!cfg.is_object()) {
        if (!o.config_path.empty() && !cfg.is_null())
            throw ConfigParseError(o.config_path + ": top level must be an object");
        cfg = json::object();
    }
    json r;
    r["command"] = command;

    auto flag_or = [&](const char* flag, const char* key, auto flag_value,
                       auto default_value) -> decltype(default_value) {
        if (o.given(flag)) return flag_value;
        if (cfg.contains(key))
            return cfg.at(key).get<decltype(default_value)>();
        return default_value;
    };
    const std::string mode =
        flag_or("--mode", "mode", o.mode, std::string("constructive"));
    mode_from_string(mode);  // reject unknown names early
    const std::string engine =
        flag_or("--engine", "engine", o.engine, std::string("moments"));
    engine_from_string(engine);

    // a config may carry either a full inline network (wrapped under
    // "network", or the file may simply *be* one) or the standard four-site
    // shorthand, never both
    const bool wrapped = cfg.contains("network");
    const bool bare = !wrapped && cfg.contains("n_sites");
    if (wrapped || bare) {
        if (o.given("--mode") || o.given("--disorder") || o.given("--dephasing"))
            throw InvalidParameter(
                "config carries an inline network; the standard-network "
                "shorthand flags do not apply");
        if (wrapped && (cfg.contains("mode") || cfg.contains("disorder") ||
                        cfg.contains("dephasing") || cfg.contains("couplings")))
            throw InvalidParameter(
                "config mixes an inline network with standard-network shorthand");
        r["network"] = wrapped ? cfg.at("network") : cfg;
    } else {
        r["mode"] = mode;
        r["disorder"] = flag_or("--disorder", "disorder", o.disorder, 0.0);
        r["dephasing"] = flag_or("--dephasing", "dephasing", o.dephasing, 0.0);
        if (cfg.contains("couplings"))
            r["couplings"] = cfg.at("couplings").get<std::array<double, 4>>();
    }
    r["engine"] = engine;
    r["cutoff"] = flag_or("--cutoff", "cutoff", o.cutoff, 3);
    r["tol"] = flag_or("--tol", "tol", o.tol, 1e-8);

    if (command == "simulate")
        r["t_final"] = flag_or("--t-final", "t_final", o.t_final, 200.0);
    if (command == "sweep-dephasing" || command == "sweep-disorder") {
        r["disorder_grid"] = cfg.contains("disorder_grid")
                                 ? cfg.at("disorder_grid").get<std::vector<double>>()
                                 : default_disorder_grid();
        r["dephasing_grid"] =
            cfg.contains("dephasing_grid")
                ? cfg.at("dephasing_grid").get<std::vector<double>>()
                : default_dephasing_grid();
        // narrowing flags pin the off-axis to a single value
        if (command == "sweep-dephasing" && o.given("--disorder"))
            r["disorder_grid"] = std::vector<double>{o.disorder};
        if (command == "sweep-disorder" && o.given("--dephasing"))
            r["dephasing_grid"] = std::vector<double>{o.dephasing};
    }
    if (command == "ensemble") {
        r["center"] = flag_or("--center", "center", o.center, 0.0);
        r["width"] = flag_or("--width", "width", o.width, 0.0);
        r["samples"] = flag_or("--samples", "samples", o.samples, 21);
        if (o.given("--seed") || cfg.contains("seed"))
            r["seed"] = flag_or("--seed", "seed", o.seed, std::uint64_t{0});
    }
    if (command == "bench") {
        const std::vector<int> def =
            engine == "moments" ? std::vector<int>{4, 8, 16, 32, 64}
                                : std::vector<int>{2, 3, 4, 5};
        r["sizes"] = o.given("--sizes")
                         ? o.sizes
                         : (cfg.contains("sizes")
                                ? cfg.at("sizes").get<std::vector<int>>()
                                : def);
        r["repetitions"] =
            flag_or("--repetitions", "repetitions", o.repetitions, 3);
    }
    r["version"] = kVersion;
    return r;
}

ValidatedNetwork network_from_config(const json& r) {
    if (r.contains("network"))
        return validate_network(NetworkSpec::from_json(r.at("network")));
    std::optional<std::array<double, 4>> g;
    if (r.contains("couplings")) g = r.at("couplings").get<std::array<double, 4>>();
    return validate_network(standard_four_site(
        mode_from_string(r.at("mode").get<std::string>()),
        r.at("disorder").get<double>(), r.at("dephasing").get<double>(), g));
}

std::optional<std::array<double, 4>> couplings_of(const json& r) {
    if (r.contains("couplings"))
        return r.at("couplings").get<std::array<double, 4>>();
    return std::nullopt;
}

fs::path prepare_out_dir(const json& r, const Options& o) {
    fs::path dir;
    if (!o.out.empty()) {
        dir = o.out;
    } else {
        const auto now = std::chrono::system_clock::now();
        const std::time_t tt = std::chrono::system_clock::to_time_t(now);
        char stamp[32];
        std::tm tmv{};
        localtime_r(&tt, &tmv);
        std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tmv);
        dir = fs::path("runs") /
              (std::string(stamp) + "-" + r.at("command").get<std::string>());
    }
    fs::create_directories(dir);
    return dir;
}

std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// execution knob, flag-only by design: it never enters resolved_config and a
// config file cannot set it, so artifacts stay machine-independent
int effective_workers(const Options& o) {
    if (o.given("--workers")) return std::max(1, o.workers);
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

std::string moments_trajectory_csv(const MomentTrajectory& traj,
                                   const ValidatedNetwork& net) {
    const int n = net.n_sites();
    const auto& det = net.detection();
    std::string s = "time";
    for (int i = 0; i < n; ++i) s += ",n_" + std::to_string(i);
    s += ",E_tr\n";
    double e = 0.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (k > 0) {
            const double dt = traj.times[k] - traj.times[k - 1];
            e += 0.5 * dt * 2.0 * det.gamma_det *
                 (traj.states[k](det.site, det.site).real() +
                  traj.states[k - 1](det.site, det.site).real());
        }
        s += fmt17(traj.times[k]);
        for (int i = 0; i < n; ++i)
            s += "," + fmt17(traj.states[k](i, i).real());
        s += "," + fmt17(e) + "\n";
    }
    return s;
}

int cmd_validate(const json& r) {
    if (r.contains("network")) {
        validate_network(NetworkSpec::from_json(r.at("network")));
    } else {
        network_from_config(r);
    }
    std::cout << "valid" << std::endl;
    return 0;
}

int cmd_steady(const json& r, const Options& o) {
    const auto net = network_from_config(r);
    const Engine engine = engine_from_string(r.at("engine").get<std::string>());
    const int cutoff = r.at("cutoff").get<int>();
    json out;
    out["resolved_config"] = r;
    if (engine == Engine::Fock || engine == Engine::Both) {
        const auto basis = build_basis(net.n_sites(), cutoff);
        const auto liou = build_liouvillian(net, basis);
        SteadyOptions opts;
        opts.check_degeneracy = false;
        const auto rho = steady_state(liou, opts);
        out["transmission_fock"] = transmission(rho, net, basis);
        const auto occ = occupations_from_density(liou, rho);
        out["occupations_fock"] =
            std::vector<double>(occ.data(), occ.data() + occ.size());
    }
    if (engine == Engine::Moments || engine == Engine::Both) {
        const auto gen = build_moment_generator(net);
        const auto C = steady_moments(gen);
        out["transmission_moments"] = transmission_from_moments(C, net);
        std::vector<double> occ;
        for (int i = 0; i < net.n_sites(); ++i) occ.push_back(C(i, i).real());
        out["occupations_moments"] = occ;
    }
    if (engine == Engine::Both) {
        const double tf = out.at("transmission_fock").get<double>();
        const double tm = out.at("transmission_moments").get<double>();
        out["rel_engine_gap"] = std::abs(tf - tm) / tm;
    }
    const fs::path dir = prepare_out_dir(r, o);
    write_json_file(dir / "steady.json", out);
    std::cout << dir.string() << std::endl;
    return 0;
}

int cmd_simulate(const json& r, const Options& o) {
    const auto net = network_from_config(r);
    const Engine engine = engine_from_string(r.at("engine").get<std::string>());
    const double t_final = r.at("t_final").get<double>();
    const double tol = r.at("tol").get<double>();
    const fs::path dir = prepare_out_dir(r, o);
    json meta;
    meta["resolved_config"] = r;
    if (engine == Engine::Fock || engine == Engine::Both) {
        const auto basis = build_basis(net.n_sites(), r.at("cutoff").get<int>());
        const auto liou = build_liouvillian(net, basis);
        const auto traj = evolve(liou, vacuum_density(basis), t_final, tol);
        write_text_file(dir / "trajectory_fock.csv", trajectory_csv(traj));
        meta["final_e_tr_fock"] = traj.e_tr.back();
    }
    if (engine == Engine::Moments || engine == Engine::Both) {
        const auto gen = build_moment_generator(net);
        const MomentMatrix C0 =
            MomentMatrix::Zero(net.n_sites(), net.n_sites());
        const auto traj = evolve_moments(gen, C0, t_final, tol);
        write_text_file(dir / "trajectory_moments.csv",
                        moments_trajectory_csv(traj, net));
    }
    write_json_file(dir / "metadata.json", meta);
    std::cout << dir.string() << std::endl;
    return 0;
}

int cmd_sweep(const json& r, const Options& o, bool dephasing_sweep) {
    if (r.contains("network"))
        throw InvalidParameter(
            "sweeps drive the standard four-site network; inline networks "
            "have no disorder/dephasing axis");
    SweepSpec spec;
    spec.mode = mode_from_string(r.at("mode").get<std::string>());
    spec.engine = engine_from_string(r.at("engine").get<std::string>());
    spec.cutoff = r.at("cutoff").get<int>();
    spec.disorder_grid = r.at("disorder_grid").get<std::vector<double>>();
    spec.dephasing_grid = r.at("dephasing_grid").get<std::vector<double>>();
    spec.couplings = couplings_of(r);
    validate_sweep_spec(spec);

    // one curve per fixed off-axis value; points are independent, so curves
    // are farmed out to workers and reassembled by index
    const std::vector<double>& fixed_values =
        dephasing_sweep ? spec.disorder_grid : spec.dephasing_grid;
    std::vector<TransmissionCurve> curves(fixed_values.size());
    const int workers = effective_workers(o);
    parallel_for_index(
        static_cast<int>(fixed_values.size()), workers, [&](int idx) {
            SweepSpec one = spec;
            if (dephasing_sweep)
                one.disorder_grid = {fixed_values[static_cast<std::size_t>(idx)]};
            else
                one.dephasing_grid = {fixed_values[static_cast<std::size_t>(idx)]};
            auto got = dephasing_sweep ? sweep_dephasing(one) : sweep_disorder(one);
            curves[static_cast<std::size_t>(idx)] = std::move(got.front());
        });

    const fs::path dir = prepare_out_dir(r, o);
    const std::string stem = dephasing_sweep ? "dephasing_w" : "disorder_g";
    json index;
    index["resolved_config"] = r;
    json files = json::array();
    for (std::size_t k = 0; k < curves.size(); ++k) {
        const std::string base = stem + short_num(fixed_values[k]);
        write_text_file(dir / (base + ".csv"), curve_csv(curves[k]));
        json side;
        side["resolved_config"] = r;
        side["curve"] = curves[k].metadata;
        write_json_file(dir / (base + ".json"), side);
        files.push_back(base + ".csv");
    }
    index["curves"] = files;
    write_json_file(dir / "sweep.json", index);
    std::cout << dir.string() << std::endl;
    return 0;
}

int cmd_ensemble(const json& r, const Options& o) {
    if (r.contains("network"))
        throw InvalidParameter("ensemble emulation drives the standard network");
    std::optional<std::uint64_t> seed;
    if (r.contains("seed")) seed = r.at("seed").get<std::uint64_t>();
    const double avg = ensemble_average_transmission(
        mode_from_string(r.at("mode").get<std::string>()),
        r.at("center").get<double>(), r.at("width").get<double>(),
        r.at("samples").get<int>(),
        engine_from_string(r.at("engine").get<std::string>()),
        r.at("cutoff").get<int>(), couplings_of(r), seed);
    json out;
    out["resolved_config"] = r;
    out["average_transmission"] = avg;
    out["sampling"] = seed.has_value() ? "uniform-random" : "uniform-grid";
    const fs::path dir = prepare_out_dir(r, o);
    write_json_file(dir / "ensemble.json", out);
    std::cout << dir.string() << std::endl;
    return 0;
}

int cmd_bench(const json& r, const Options& o) {
    const Engine engine = engine_from_string(r.at("engine").get<std::string>());
    if (engine == Engine::Both)
        throw InvalidParameter("bench engine must be fock or moments");
    const auto rep = complexity_benchmark(
        engine, r.at("sizes").get<std::vector<int>>(), r.at("cutoff").get<int>(),
        r.at("repetitions").get<int>());
    json out = scaling_report_json(rep);
    out["resolved_config"] = r;
    try {
        const auto fit = scaling_fit(rep);
        out["fit"] = {{"model", fit.model},
                      {"slope", fit.slope},
                      {"goodness", fit.goodness}};
    } catch (const InsufficientData& e) {
        out["fit"] = {{"error", e.what()}};
    }
    const fs::path dir = prepare_out_dir(r, o);
    write_text_file(dir / "scaling.csv", scaling_csv(rep));
    write_json_file(dir / "scaling.json", out);
    std::cout << dir.string() << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "noise-assisted transport in coupled-cavity networks\n"
        "exit codes: 0 ok, 2 config parse error, 3 validation error, "
        "4 solver error, 1 other failure"};
    app.require_subcommand(1);
    Options o;
    std::vector<std::pair<std::string, CLI::App*>> subs;
    for (const char* name :
         {"simulate", "steady", "sweep-dephasing", "sweep-disorder", "ensemble",
          "bench", "validate"}) {
        CLI::App* sub = app.add_subcommand(name);
        subs.emplace_back(name, sub);
    }
    subs[0].second->description("evolve from vacuum and write trajectories");
    subs[1].second->description("steady state and transmission");
    subs[2].second->description("transmission vs dephasing, one curve per disorder");
    subs[3].second->description("transmission vs disorder, one curve per dephasing");
    subs[4].second->description("window-averaged transmission over static detunings");
    subs[5].second->description("engine scaling benchmark");
    subs[6].second->description("check a network config and exit");
    for (auto& [name, sub] : subs) add_common(sub, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << json{{"error", "ConfigParseError"},
                          {"message", e.what()}}
                         .dump()
                  << std::endl;
        return 2;
    }

    o.parsed = app.get_subcommands().front();
    const std::string command = o.parsed->get_name();
    try {
        const json r = resolve_config(command, o);
        if (command == "validate") return cmd_validate(r);
        if (command == "steady") return cmd_steady(r, o);
        if (command == "simulate") return cmd_simulate(r, o);
        if (command == "sweep-dephasing") return cmd_sweep(r, o, true);
        if (command == "sweep-disorder") return cmd_sweep(r, o, false);
        if (command == "ensemble") return cmd_ensemble(r, o);
        if (command == "bench") return cmd_bench(r, o);
        throw Error("unreachable command " + command);
    } catch (const ConfigParseError& e) {
        std::cerr << json{{"error", "ConfigParseError"}, {"message", e.what()}}.dump()
                  << std::endl;
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << json{{"error", "ValidationError"}, {"message", e.what()}}.dump()
                  << std::endl;
        return 3;
    } catch (const SolverError& e) {
        std::cerr << json{{"error", "SolverError"}, {"message", e.what()}}.dump()
                  << std::endl;
        return 4;
    } catch (const json::exception& e) {
        // wrong-typed or missing config keys surface here
        std::cerr << json{{"error", "ConfigParseError"}, {"message", e.what()}}.dump()
                  << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Error"}, {"message", e.what()}}.dump()
                  << std::endl;
        return 1;
    }
}
