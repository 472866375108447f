#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "natsim/bench.hpp"
#include "natsim/errors.hpp"
#include "natsim/experiments.hpp"
#include "natsim/lindblad.hpp"
#include "natsim/network.hpp"

namespace natsim {

// 17 significant digits: enough to reproduce any double exactly on re-read.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigParseError(path.string() + ": " + e.what());
    }
}

// time, n_0..n_{N-1}, trace, E_tr — one row per sample.
inline std::string trajectory_csv(const Trajectory& traj) {
    const int n_sites = static_cast<int>(traj.occupations.cols());
    std::string s = "time";
    for (int i = 0; i < n_sites; ++i) s += ",n_" + std::to_string(i);
    s += ",trace,E_tr\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        s += fmt17(traj.times[k]);
        for (int i = 0; i < n_sites; ++i)
            s += "," + fmt17(traj.occupations(static_cast<Eigen::Index>(k), i));
        s += "," + fmt17(traj.trace[k]) + "," + fmt17(traj.e_tr[k]) + "\n";
    }
    return s;
}

inline std::string curve_csv(const TransmissionCurve& curve) {
    std::string s = "abscissa,raw,normalized\n";
    for (std::size_t k = 0; k < curve.abscissa.size(); ++k)
        s += fmt17(curve.abscissa[k]) + "," + fmt17(curve.raw[k]) + "," +
             fmt17(curve.normalized[k]) + "\n";
    return s;
}

inline std::string scaling_csv(const ScalingReport& rep) {
    std::string s = "N,median_seconds,spread_seconds\n";
    for (std::size_t k = 0; k < rep.sizes.size(); ++k)
        s += std::to_string(rep.sizes[k]) + "," + fmt17(rep.median_seconds[k]) +
             "," + fmt17(rep.spread_seconds[k]) + "\n";
    return s;
}

inline json scaling_report_json(const ScalingReport& rep) {
    json j;
    j["engine"] = rep.engine;
    j["model"] = rep.model;
    j["cutoff"] = rep.cutoff;
    j["repetitions"] = rep.repetitions;
    j["sizes"] = rep.sizes;
    j["state_dims"] = rep.state_dims;
    j["vectorized_dims"] = rep.vectorized_dims;
    j["median_seconds"] = rep.median_seconds;
    j["spread_seconds"] = rep.spread_seconds;
    j["notes"] = rep.notes;
    j["environment"] = rep.environment;
    return j;
}

// Runs fn(0..count-1) on `workers` threads.  Tasks are claimed through an
// atomic counter; results must go to preallocated per-index slots so the
// output is identical no matter how the tasks interleave.  The first
// exception wins and is rethrown on the caller's thread.
inline void parallel_for_index(int count, int workers,
                               const std::function<void(int)>& fn) {
    if (count <= 0) return;
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (error) return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(workers, count);
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace natsim
