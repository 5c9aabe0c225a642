#pragma once

// Experiment configuration: INI-style sections of key = value pairs. Every
// value has a built-in default, so a minimal file only names the fracture set.

#include "fracms/basis.hpp"
#include "fracms/cloud.hpp"
#include "fracms/coarse.hpp"
#include "fracms/fem.hpp"
#include "fracms/geometry.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace fracms::harness {

enum class Scheme { fine, ms_implicit, ms_partial, ms_explicit_diag };

inline std::string to_string(Scheme s)
{
    switch (s) {
    case Scheme::fine: return "fine";
    case Scheme::ms_implicit: return "ms_implicit";
    case Scheme::ms_partial: return "ms_partial";
    case Scheme::ms_explicit_diag: return "ms_explicit_diag";
    }
    return "fine";
}

inline Scheme scheme_from_string(const std::string& name)
{
    for (Scheme s : {Scheme::fine, Scheme::ms_implicit, Scheme::ms_partial, Scheme::ms_explicit_diag}) {
        if (to_string(s) == name) return s;
    }
    throw std::invalid_argument("unknown scheme '" + name + "'");
}

/// How coarse dofs are assigned to the implicit part of the split step.
enum class SplitMode {
    fracture,      ///< implicit iff the node's support touches a fracture
    all_implicit,  ///< no explicit dofs
    all_explicit,  ///< no implicit dofs
};

inline std::string to_string(SplitMode m)
{
    switch (m) {
    case SplitMode::fracture: return "fracture";
    case SplitMode::all_implicit: return "all_implicit";
    case SplitMode::all_explicit: return "all_explicit";
    }
    return "fracture";
}

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    double lx = 80.0;
    double ly = 80.0;
    int nx = 186;
    int ny = 186;
    Side dirichlet_side = Side::left;
    std::filesystem::path fractures;  ///< empty: no fractures

    MaterialParams material;
    double t_max = 900.0;

    CloudParams cloud;
    BasisParams basis;

    std::vector<Scheme> schemes{Scheme::fine, Scheme::ms_implicit, Scheme::ms_partial};
    SplitMode split = SplitMode::fracture;
    CoarseDirichlet coarse_dirichlet = CoarseDirichlet::eliminate;
    linalg::SolveMethod fine_solver = linalg::SolveMethod::direct;
    std::vector<double> snapshot_times;  ///< empty: {t_max}

    std::filesystem::path out_dir;

    [[nodiscard]] bool has(Scheme s) const { return std::find(schemes.begin(), schemes.end(), s) != schemes.end(); }

    [[nodiscard]] std::vector<double> resolved_snapshot_times() const
    {
        return snapshot_times.empty() ? std::vector<double>{t_max} : snapshot_times;
    }

    void validate() const
    {
        if (nx < 1 || ny < 1) throw ConfigError("domain.nx and domain.ny must be >= 1");
        if (!(lx > 0.0) || !(ly > 0.0)) throw ConfigError("domain extents must be positive");
        try {
            material.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (std::abs(material.tau * material.n_steps - t_max) > 1e-9 * std::max(1.0, t_max)) {
            throw ConfigError("tau * n_steps = " + std::to_string(material.tau * material.n_steps)
                              + " disagrees with t_max = " + std::to_string(t_max));
        }
        if (cloud.n_points < 1) throw ConfigError("cloud.n_points must be >= 1");
        if (basis.n_eigen < 1) throw ConfigError("basis.n_eigen must be >= 1");
        if (schemes.empty()) throw ConfigError("run.schemes is empty");
    }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

inline std::vector<double> parse_doubles(const std::string& s)
{
    std::vector<double> out;
    for (const auto& tok : split_list(s)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + tok + "'");
        }
    }
    return out;
}

} // namespace detail

/// Reads a configuration. Relative fracture paths resolve against `base_dir`.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {})
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    static const std::map<std::string, std::set<std::string>> known{
        {"domain", {"lx", "ly", "nx", "ny", "dirichlet_side", "fractures"}},
        {"material", {"c_m", "c_f", "k_m", "k_f", "mu", "alpha", "p0", "g", "tau", "n_steps", "t_max"}},
        {"cloud",
         {"n_points", "seed", "beta", "f_fracture", "f_background", "zeta", "growth", "max_repairs", "repair", "lloyd_iters",
          "lloyd_tol", "samples_per_iter"}},
        {"basis", {"n_eigen", "lambda1", "lambda2"}},
        {"run", {"schemes", "split", "coarse_dirichlet", "fine_solver", "snapshot_times", "out_dir"}},
    };
    for (const auto& [section, body] : tree) {
        const auto it = known.find(section);
        if (it == known.end()) throw ConfigError("unknown config section [" + section + "]");
        for (const auto& [key, value] : body) {
            if (!it->second.contains(key)) throw ConfigError("unknown key " + section + "." + key);
        }
    }

    const auto get = [&](const std::string& key) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'))) return *v;
        return std::nullopt;
    };
    const auto num = [&](const std::string& key, auto& target) {
        if (auto v = get(key)) {
            try {
                std::size_t used = 0;
                using T = std::decay_t<decltype(target)>;
                if constexpr (std::is_integral_v<T>) {
                    const long long x = std::stoll(*v, &used);
                    target = static_cast<T>(x);
                } else {
                    target = std::stod(*v, &used);
                }
                if (used != v->size()) throw std::invalid_argument(*v);
            } catch (const std::exception&) {
                throw ConfigError("invalid value for " + key + ": '" + *v + "'");
            }
            return true;
        }
        return false;
    };

    ExperimentConfig c;
    num("domain.lx", c.lx);
    num("domain.ly", c.ly);
    num("domain.nx", c.nx);
    num("domain.ny", c.ny);
    if (auto v = get("domain.dirichlet_side")) {
        try {
            c.dirichlet_side = side_from_string(*v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (auto v = get("domain.fractures")) {
        std::filesystem::path p(*v);
        c.fractures = (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
    }

    auto& m = c.material;
    num("material.c_m", m.c_m);
    num("material.c_f", m.c_f);
    num("material.k_m", m.k_m);
    num("material.k_f", m.k_f);
    num("material.mu", m.mu);
    num("material.alpha", m.alpha);
    num("material.p0", m.p0);
    num("material.g", m.g);
    const bool has_tau = num("material.tau", m.tau);
    const bool has_steps = num("material.n_steps", m.n_steps);
    const bool has_tmax = num("material.t_max", c.t_max);
    if (has_tmax && !has_steps && !(m.tau > 0.0)) throw ConfigError("material.tau must be positive");
    if (has_tmax && has_tau && !has_steps) {
        const double steps = c.t_max / m.tau;
        if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
            throw ConfigError("t_max is not a whole number of steps of tau");
        }
        m.n_steps = static_cast<int>(std::lround(steps));
    } else if (has_tmax && has_steps && !has_tau) {
        if (m.n_steps < 1) throw ConfigError("material.n_steps must be >= 1 when deriving tau");
        m.tau = c.t_max / m.n_steps;
    } else if (has_tmax && !has_tau && !has_steps) {
        m.n_steps = static_cast<int>(std::lround(c.t_max / m.tau));
    } else if (!has_tmax) {
        c.t_max = m.tau * m.n_steps;
    }

    auto& cl = c.cloud;
    num("cloud.n_points", cl.n_points);
    num("cloud.seed", cl.seed);
    num("cloud.beta", cl.beta);
    num("cloud.f_fracture", cl.f_fracture);
    num("cloud.f_background", cl.f_background);
    num("cloud.zeta", cl.radii.zeta);
    num("cloud.growth", cl.radii.growth);
    num("cloud.max_repairs", cl.radii.max_repairs);
    if (auto v = get("cloud.repair")) {
        if (*v == "local") cl.radii.repair = RadiusRepair::local;
        else if (*v == "uniform") cl.radii.repair = RadiusRepair::uniform;
        else throw ConfigError("cloud.repair must be local or uniform");
    }
    num("cloud.lloyd_iters", cl.lloyd_iters);
    num("cloud.lloyd_tol", cl.lloyd_tol);
    num("cloud.samples_per_iter", cl.samples_per_iter);

    num("basis.n_eigen", c.basis.n_eigen);
    double l = 0.0;
    if (num("basis.lambda1", l)) c.basis.lambda1 = l;
    if (num("basis.lambda2", l)) c.basis.lambda2 = l;

    if (auto v = get("run.schemes")) {
        c.schemes.clear();
        try {
            for (const auto& s : detail::split_list(*v)) c.schemes.push_back(scheme_from_string(s));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (auto v = get("run.split")) {
        if (*v == "fracture") c.split = SplitMode::fracture;
        else if (*v == "all_implicit") c.split = SplitMode::all_implicit;
        else if (*v == "all_explicit") c.split = SplitMode::all_explicit;
        else throw ConfigError("run.split must be fracture, all_implicit or all_explicit");
    }
    if (auto v = get("run.coarse_dirichlet")) {
        if (*v == "eliminate") c.coarse_dirichlet = CoarseDirichlet::eliminate;
        else if (*v == "penalty") c.coarse_dirichlet = CoarseDirichlet::penalty;
        else throw ConfigError("run.coarse_dirichlet must be eliminate or penalty");
    }
    if (auto v = get("run.fine_solver")) {
        if (*v == "direct") c.fine_solver = linalg::SolveMethod::direct;
        else if (*v == "cg") c.fine_solver = linalg::SolveMethod::cg;
        else throw ConfigError("run.fine_solver must be direct or cg");
    }
    if (auto v = get("run.snapshot_times")) c.snapshot_times = detail::parse_doubles(*v);
    if (auto v = get("run.out_dir")) c.out_dir = *v;

    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.parent_path());
}

/// Every resolved setting, defaults included.
inline nlohmann::ordered_json to_json(const ExperimentConfig& c)
{
    nlohmann::ordered_json j;
    j["domain"] = {{"lx", c.lx},
                   {"ly", c.ly},
                   {"nx", c.nx},
                   {"ny", c.ny},
                   {"dirichlet_side", std::string(to_string(c.dirichlet_side))},
                   {"fractures", c.fractures.string()}};
    const auto& m = c.material;
    j["material"] = {{"c_m", m.c_m}, {"c_f", m.c_f}, {"k_m", m.k_m}, {"k_f", m.k_f},         {"mu", m.mu},
                     {"alpha", m.alpha}, {"p0", m.p0}, {"g", m.g},     {"tau", m.tau},         {"n_steps", m.n_steps},
                     {"t_max", c.t_max}};
    const auto& cl = c.cloud;
    j["cloud"] = {{"n_points", cl.n_points},
                  {"seed", cl.seed},
                  {"beta", cl.beta},
                  {"f_fracture", cl.f_fracture},
                  {"f_background", cl.f_background},
                  {"zeta", cl.radii.zeta},
                  {"growth", cl.radii.growth},
                  {"max_repairs", cl.radii.max_repairs},
                  {"repair", cl.radii.repair == RadiusRepair::local ? "local" : "uniform"},
                  {"lloyd_iters", cl.lloyd_iters},
                  {"lloyd_tol", cl.lloyd_tol},
                  {"samples_per_iter",
                   cl.samples_per_iter > 0 ? cl.samples_per_iter : std::max(200 * cl.n_points, kMinLloydSamples)}};
    j["basis"] = {{"n_eigen", c.basis.n_eigen},
                  {"lambda1", c.basis.lambda1.value_or(m.k_m / m.mu)},
                  {"lambda2", c.basis.lambda2.value_or(m.k_f / m.mu)}};
    std::vector<std::string> schemes;
    for (Scheme s : c.schemes) schemes.push_back(to_string(s));
    j["run"] = {{"schemes", schemes},
                {"split", to_string(c.split)},
                {"coarse_dirichlet", c.coarse_dirichlet == CoarseDirichlet::eliminate ? "eliminate" : "penalty"},
                {"fine_solver", c.fine_solver == linalg::SolveMethod::direct ? "direct" : "cg"},
                {"snapshot_times", c.resolved_snapshot_times()},
                {"out_dir", c.out_dir.string()}};
    return j;
}

} // namespace fracms::harness
