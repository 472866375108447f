#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "natsim/errors.hpp"

namespace natsim {

using json = nlohmann::ordered_json;

enum class InterferenceMode { Constructive, Destructive };

inline const char* to_string(InterferenceMode m) {
    return m == InterferenceMode::Constructive ? "constructive" : "destructive";
}

inline InterferenceMode mode_from_string(const std::string& s) {
    if (s == "constructive") return InterferenceMode::Constructive;
    if (s == "destructive") return InterferenceMode::Destructive;
    throw ConfigParseError("unknown interference mode: " + s);
}

struct Coupling {
    int i = 0;
    int j = 0;
    double g = 0.0;
};

struct InjectionSpec {
    int site = 0;
    double gamma0 = 0.0;    // bath coupling rate
    double n_th = 0.0;      // bath mean photon number
};

struct DetectionSpec {
    int site = 0;
    double gamma_det = 0.0;  // absorption rate into the detector
};

// Raw, unvalidated description of a cavity network.
struct NetworkSpec {
    int n_sites = 0;
    std::vector<double> omega;         // per-site resonance frequency
    std::vector<Coupling> couplings;   // undirected edges, one entry per pair
    std::vector<double> gamma_deph;    // per-site dephasing rate
    InjectionSpec injection;
    DetectionSpec detection;

    json to_json() const {
        json cs = json::array();
        for (const auto& c : couplings) cs.push_back({{"i", c.i}, {"j", c.j}, {"g", c.g}});
        return json{{"n_sites", n_sites},
                    {"omega", omega},
                    {"couplings", cs},
                    {"gamma_deph", gamma_deph},
                    {"injection",
                     {{"site", injection.site},
                      {"gamma0", injection.gamma0},
                      {"n_th", injection.n_th}}},
                    {"detection",
                     {{"site", detection.site}, {"gamma_det", detection.gamma_det}}}};
    }

    static NetworkSpec from_json(const json& j) {
        NetworkSpec s;
        try {
            s.n_sites = j.at("n_sites").get<int>();
            s.omega = j.at("omega").get<std::vector<double>>();
            for (const auto& c : j.at("couplings"))
                s.couplings.push_back({c.at("i").get<int>(), c.at("j").get<int>(),
                                       c.at("g").get<double>()});
            s.gamma_deph = j.at("gamma_deph").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw ConfigParseError(std::string("network spec: ") + e.what());
        }
        if (!j.contains("injection")) throw MissingAttachment("injection");
        if (!j.contains("detection")) throw MissingAttachment("detection");
        try {
            const auto& inj = j.at("injection");
            s.injection = {inj.at("site").get<int>(), inj.at("gamma0").get<double>(),
                           inj.at("n_th").get<double>()};
            const auto& det = j.at("detection");
            s.detection = {det.at("site").get<int>(), det.at("gamma_det").get<double>()};
        } catch (const json::exception& e) {
            throw ConfigParseError(std::string("network spec: ") + e.what());
        }
        return s;
    }
};

// Immutable network that passed validation; the only door into the engines.
class ValidatedNetwork {
  public:
    const NetworkSpec& spec() const { return spec_; }
    int n_sites() const { return spec_.n_sites; }
    const std::vector<double>& omega() const { return spec_.omega; }
    const std::vector<double>& gamma_deph() const { return spec_.gamma_deph; }
    const std::vector<Coupling>& couplings() const { return spec_.couplings; }
    const InjectionSpec& injection() const { return spec_.injection; }
    const DetectionSpec& detection() const { return spec_.detection; }

    // Hermitian one-body matrix: omega_i on the diagonal, g_ij off it.
    Eigen::MatrixXd coupling_matrix() const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(spec_.n_sites, spec_.n_sites);
        for (int i = 0; i < spec_.n_sites; ++i) m(i, i) = spec_.omega[i];
        for (const auto& c : spec_.couplings) {
            m(c.i, c.j) = c.g;
            m(c.j, c.i) = c.g;
        }
        return m;
    }

    // True when every site can reach a site with nonzero photon loss through
    // the coupling graph; this is what makes the steady state unique.
    bool all_sites_drain() const {
        const int n = spec_.n_sites;
        std::vector<char> lossy(n, 0);
        if (spec_.injection.gamma0 > 0) lossy[spec_.injection.site] = 1;
        if (spec_.detection.gamma_det > 0) lossy[spec_.detection.site] = 1;
        std::vector<std::vector<int>> adj(n);
        for (const auto& c : spec_.couplings)
            if (c.g != 0.0) {
                adj[c.i].push_back(c.j);
                adj[c.j].push_back(c.i);
            }
        std::vector<char> reached(n, 0);
        std::vector<int> stack;
        for (int i = 0; i < n; ++i)
            if (lossy[i]) {
                reached[i] = 1;
                stack.push_back(i);
            }
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : adj[v])
                if (!reached[w]) {
                    reached[w] = 1;
                    stack.push_back(w);
                }
        }
        for (int i = 0; i < n; ++i)
            if (!reached[i]) return false;
        return true;
    }

    friend ValidatedNetwork validate_network(const NetworkSpec&);

  private:
    explicit ValidatedNetwork(NetworkSpec spec) : spec_(std::move(spec)) {}
    NetworkSpec spec_;
};

inline ValidatedNetwork validate_network(const NetworkSpec& spec) {
    if (spec.n_sites < 1) throw InvalidParameter("n_sites");
    const int n = spec.n_sites;
    if (static_cast<int>(spec.omega.size()) != n) throw InvalidParameter("omega (length)");
    if (static_cast<int>(spec.gamma_deph.size()) != n)
        throw InvalidParameter("gamma_deph (length)");
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(spec.omega[i])) throw InvalidParameter("omega[" + std::to_string(i) + "]");
        if (spec.gamma_deph[i] < 0 || !std::isfinite(spec.gamma_deph[i]))
            throw NegativeRate("gamma_deph[" + std::to_string(i) + "]");
    }
    // couplings: indices in range, no self-loops, one value per unordered pair
    std::vector<std::vector<char>> seen(n, std::vector<char>(n, 0));
    for (const auto& c : spec.couplings) {
        const std::string pair =
            "(" + std::to_string(c.i) + "," + std::to_string(c.j) + ")";
        if (c.i < 0 || c.i >= n || c.j < 0 || c.j >= n) throw IndexOutOfRange("coupling " + pair);
        if (c.i == c.j) throw AsymmetricCoupling("self-coupling " + pair);
        if (!std::isfinite(c.g)) throw InvalidParameter("coupling " + pair);
        if (seen[c.i][c.j]) throw AsymmetricCoupling("duplicate pair " + pair);
        seen[c.i][c.j] = seen[c.j][c.i] = 1;
    }
    if (spec.injection.site < 0 || spec.injection.site >= n)
        throw IndexOutOfRange("injection.site");
    if (spec.detection.site < 0 || spec.detection.site >= n)
        throw IndexOutOfRange("detection.site");
    if (spec.injection.gamma0 < 0 || !std::isfinite(spec.injection.gamma0))
        throw NegativeRate("injection.gamma0");
    if (spec.injection.n_th < 0 || !std::isfinite(spec.injection.n_th))
        throw NegativeRate("injection.n_th");
    if (spec.detection.gamma_det < 0 || !std::isfinite(spec.detection.gamma_det))
        throw NegativeRate("detection.gamma_det");
    return ValidatedNetwork(spec);
}

// Default couplings (g01, g02, g13, g23) of the 4-site diamond.  The two arms
// are deliberately asymmetric and the arm path products g01*g13 and g02*g23
// are kept well apart so the destructive configuration, while strongly
// suppressed, stays clear of an exactly dark (singular) steady state.
inline constexpr std::array<double, 4> kDefaultCouplings{0.425, 0.325, 0.2, 0.45};

// The canonical diamond: source site 0 feeds two arms 0-1-3 and 0-2-3 that
// interfere at the sink site 3.  Static disorder and dephasing act on site 2.
// Destructive mode flips the sign of g01.
inline NetworkSpec standard_four_site(
    InterferenceMode mode, double omega2, double gamma2,
    std::optional<std::array<double, 4>> couplings = std::nullopt) {
    if (!(gamma2 >= 0) || !std::isfinite(gamma2)) throw InvalidParameter("gamma2");
    if (!std::isfinite(omega2)) throw InvalidParameter("omega2");
    const std::array<double, 4> g = couplings.value_or(kDefaultCouplings);
    const double sign = (mode == InterferenceMode::Destructive) ? -1.0 : 1.0;
    NetworkSpec s;
    s.n_sites = 4;
    s.omega = {0.0, 0.0, omega2, 0.0};
    s.couplings = {{0, 1, sign * g[0]}, {0, 2, g[1]}, {1, 3, g[2]}, {2, 3, g[3]}};
    s.gamma_deph = {0.0, 0.0, gamma2, 0.0};
    s.injection = {0, 0.5, 0.1};
    s.detection = {3, 0.5};
    return s;
}

// Open chain used by the scaling benchmark: inject at site 0, detect at the
// far end, uniform couplings.
inline NetworkSpec chain_network(int n_sites, double g = 0.5) {
    if (n_sites < 1) throw InvalidParameter("n_sites");
    NetworkSpec s;
    s.n_sites = n_sites;
    s.omega.assign(n_sites, 0.0);
    s.gamma_deph.assign(n_sites, 0.0);
    for (int i = 0; i + 1 < n_sites; ++i) s.couplings.push_back({i, i + 1, g});
    s.injection = {0, 0.5, 0.1};
    s.detection = {n_sites - 1, 0.5};
    return s;
}

}  // namespace natsim
