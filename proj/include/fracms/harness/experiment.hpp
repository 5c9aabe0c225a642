#pragma once

// Experiment orchestration: one shared mesh, cloud and multiscale space, the
// requested time-stepping schemes, pairwise error series and file output.

#include "fracms/basis.hpp"
#include "fracms/cloud.hpp"
#include "fracms/coarse.hpp"
#include "fracms/fem.hpp"
#include "fracms/geometry.hpp"
#include "fracms/harness/config.hpp"
#include "fracms/harness/io.hpp"
#include "fracms/harness/metrics.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fracms::harness {

/// Failure inside one pipeline stage; what() reads "[stage] message".
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage))
    {
    }
    [[nodiscard]] const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f())
{
    const auto start = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            spdlog::debug("stage {} took {:.3f} s", stage,
                          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        } else {
            auto r = f();
            spdlog::debug("stage {} took {:.3f} s", stage,
                          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            return r;
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

inline FineMesh build_mesh(const ExperimentConfig& c)
{
    return run_stage("mesh", [&] {
        FineMesh mesh = build_structured_trimesh(c.lx, c.ly, c.nx, c.ny, c.dirichlet_side);
        if (!c.fractures.empty()) mesh = snap_fractures(std::move(mesh), load_fractures(c.fractures, c.lx, c.ly));
        return mesh;
    });
}

inline PointCloud build_cloud(const FineMesh& mesh, const ExperimentConfig& c, CloudDiagnostics* diag = nullptr)
{
    return run_stage("cloud", [&] { return build_point_cloud(mesh, c.cloud, diag); });
}

/// Node flags for the partially explicit split.
inline std::vector<bool> node_split(const PointCloud& cloud, SplitMode mode)
{
    switch (mode) {
    case SplitMode::all_implicit: return std::vector<bool>(cloud.points.size(), true);
    case SplitMode::all_explicit: return std::vector<bool>(cloud.points.size(), false);
    case SplitMode::fracture: break;
    }
    return cloud.implicit;
}

/// Everything shared by the schemes of one experiment.
struct Discretization {
    FineMesh mesh;
    FineSystem fine;
    std::optional<PointCloud> cloud;
    std::optional<MultiscaleSpace> space;
    std::optional<CoarseSystem> coarse;
    CloudDiagnostics cloud_diag;
};

/// Mesh and fine system always; cloud, basis and coarse system when `multiscale`.
/// A supplied cloud must belong to the same mesh and replaces the cloud stage.
inline Discretization prepare(const ExperimentConfig& c, bool multiscale, const PointCloud* cloud = nullptr)
{
    c.validate();
    Discretization d;
    d.mesh = build_mesh(c);
    d.fine = run_stage("assemble", [&] { return assemble_fine_system(d.mesh, c.material); });
    if (!multiscale) return d;
    d.cloud = cloud ? *cloud : build_cloud(d.mesh, c, &d.cloud_diag);
    d.space = run_stage("basis", [&] { return build_multiscale_space(d.mesh, *d.cloud, c.material, c.basis); });
    d.coarse = run_stage("coarse", [&] {
        CoarseSystem sys = project_system(d.space->projection, d.fine, c.material, c.coarse_dirichlet);
        sys.implicit_rows = d.space->dof_flags(node_split(*d.cloud, c.split));
        return sys;
    });
    return d;
}

struct ExperimentReport {
    std::map<std::string, Trajectory> trajectories;
    std::map<std::string, std::vector<ErrorSample>> errors;  ///< key "<ref>_vs_<test>"
    int n_fine = 0;
    int n_nodes = 0;
    int n_implicit = 0;
    int n_explicit = 0;
    int n_dofs = 0;
    int partial_factorizations = 0;
    std::vector<std::filesystem::path> files;
};

inline Trajectory run_coarse_scheme(const Discretization& d, const ExperimentConfig& c, Scheme scheme,
                                    int* factorizations = nullptr)
{
    const auto& m = c.material;
    Trajectory traj;
    traj.label = to_string(scheme);
    Vector pc = project_initial(*d.coarse, d.fine.mass, Vector::Constant(d.fine.size(), m.p0));
    traj.push(0.0, reconstruct_fine(*d.coarse, pc, true));
    if (m.n_steps == 0) return traj;

    const auto advance = [&](const auto& stepper) {
        for (int n = 1; n <= m.n_steps; ++n) {
            pc = stepper.step(pc, n == 1);
            traj.push(n * m.tau, reconstruct_fine(*d.coarse, pc));
        }
    };
    if (scheme == Scheme::ms_implicit) {
        advance(CoarseImplicitStepper(*d.coarse));
        return traj;
    }
    CoarseSystem sys = *d.coarse;
    if (scheme == Scheme::ms_explicit_diag) sys.implicit_rows.assign(sys.implicit_rows.size(), false);
    const PartiallyExplicitStepper stepper(sys);
    advance(stepper);
    if (factorizations) *factorizations = stepper.factorizations();
    return traj;
}

/// Relative errors of `test` against `ref` at steps 1..N_t.
inline std::vector<ErrorSample> error_series(const Trajectory& ref, const Trajectory& test, const FineSystem& fine)
{
    std::vector<ErrorSample> out;
    for (std::size_t n = 1; n < ref.size() && n < test.size(); ++n) {
        out.push_back({ref.times[n], relative_errors(ref.snapshots[n], test.snapshots[n], fine.unit_mass,
                                                     fine.unit_stiffness)});
    }
    return out;
}

namespace detail {

inline std::string time_tag(double t)
{
    std::string s = format_double(t);
    for (char& ch : s) {
        if (ch == '.') ch = 'p';
    }
    return s;
}

} // namespace detail

/// Runs the configured schemes on a shared discretization and, when an
/// output directory is set, writes error series, field snapshots, the cloud
/// dump and a manifest of the resolved configuration.
inline ExperimentReport run_experiment(const ExperimentConfig& c, const PointCloud* cloud = nullptr)
{
    const bool multiscale =
        c.has(Scheme::ms_implicit) || c.has(Scheme::ms_partial) || c.has(Scheme::ms_explicit_diag);
    const Discretization d = prepare(c, multiscale, cloud);

    ExperimentReport rep;
    rep.n_fine = d.mesh.n_vertices();
    if (multiscale) {
        const auto flags = node_split(*d.cloud, c.split);
        rep.n_nodes = d.cloud->size();
        rep.n_implicit = static_cast<int>(std::count(flags.begin(), flags.end(), true));
        rep.n_explicit = rep.n_nodes - rep.n_implicit;
        rep.n_dofs = d.space->n_dofs();
    }

    for (Scheme s : c.schemes) {
        const std::string name = to_string(s);
        Trajectory traj = run_stage(("solve:" + name).c_str(), [&] {
            if (s == Scheme::fine) {
                Trajectory t = run_fine_reference(d.mesh, c.material, {c.fine_solver, 1e-10, 20000});
                return t;
            }
            return run_coarse_scheme(d, c, s, s == Scheme::ms_partial ? &rep.partial_factorizations : nullptr);
        });
        rep.trajectories.emplace(name, std::move(traj));
    }

    const std::vector<std::pair<Scheme, Scheme>> pairs{{Scheme::fine, Scheme::ms_implicit},
                                                       {Scheme::fine, Scheme::ms_partial},
                                                       {Scheme::ms_implicit, Scheme::ms_partial},
                                                       {Scheme::fine, Scheme::ms_explicit_diag}};
    run_stage("errors", [&] {
        for (const auto& [ref, test] : pairs) {
            if (!c.has(ref) || !c.has(test)) continue;
            rep.errors.emplace(to_string(ref) + "_vs_" + to_string(test),
                               error_series(rep.trajectories.at(to_string(ref)), rep.trajectories.at(to_string(test)),
                                            d.fine));
        }
    });

    if (c.out_dir.empty()) return rep;
    run_stage("output", [&] {
        const auto& dir = c.out_dir;
        for (const auto& [key, series] : rep.errors) {
            const auto path = dir / ("errors_" + key + ".csv");
            write_error_series(series, path);
            rep.files.push_back(path);
        }
        for (const auto& [name, traj] : rep.trajectories) {
            for (double t : c.resolved_snapshot_times()) {
                const long n = std::lround(t / c.material.tau);
                if (n < 0 || static_cast<std::size_t>(n) >= traj.size()) {
                    throw IoError("snapshot time " + format_double(t) + " outside the run");
                }
                const auto path = dir / ("field_" + name + "_t" + detail::time_tag(traj.times[static_cast<std::size_t>(n)]) + ".vtk");
                write_vtk(d.mesh, traj.snapshots[static_cast<std::size_t>(n)], path);
                rep.files.push_back(path);
            }
        }
        if (multiscale) {
            write_cloud_csv(*d.cloud, dir / "cloud.csv");
            write_eigenvalues_csv(*d.space, dir / "eigenvalues.csv");
            rep.files.push_back(dir / "cloud.csv");
            rep.files.push_back(dir / "eigenvalues.csv");
        }
        nlohmann::ordered_json manifest;
        manifest["config"] = to_json(c);
        manifest["mesh"] = {{"vertices", d.mesh.n_vertices()},
                            {"triangles", d.mesh.n_triangles()},
                            {"fracture_edges", d.mesh.fracture_edges.size()},
                            {"fracture_length", d.mesh.fracture_length()}};
        if (multiscale) {
            manifest["cloud"] = {{"N", rep.n_nodes},
                                 {"N_I", rep.n_implicit},
                                 {"N_E", rep.n_explicit},
                                 {"coarse_dofs", rep.n_dofs},
                                 {"lloyd_iterations", d.cloud_diag.lloyd_iterations},
                                 {"radius_repairs", d.cloud_diag.radius_repairs}};
        }
        std::vector<std::string> files;
        for (const auto& f : rep.files) files.push_back(f.filename().string());
        manifest["files"] = files;
        const auto path = dir / "manifest.json";
        auto out = harness::detail::open_out(path);
        out << manifest.dump(2) << '\n';
        harness::detail::finish(out, path);
        rep.files.push_back(path);
    });
    return rep;
}

struct CflReport {
    StableTau all;
    StableTau explicit_block;
    int n_implicit = 0;
    int n_explicit = 0;
};

/// Stable explicit step sizes of the coarse system, all dofs versus the explicit block.
inline CflReport stable_tau_report(const ExperimentConfig& c, const PointCloud* cloud = nullptr)
{
    const Discretization d = prepare(c, true, cloud);
    return run_stage("cfl", [&] {
        CflReport rep;
        rep.all = estimate_stable_tau(*d.coarse, StableSubset::all);
        rep.explicit_block = estimate_stable_tau(*d.coarse, StableSubset::explicit_block);
        const auto flags = node_split(*d.cloud, c.split);
        rep.n_implicit = static_cast<int>(std::count(flags.begin(), flags.end(), true));
        rep.n_explicit = d.cloud->size() - rep.n_implicit;
        return rep;
    });
}

/// Copy of `c` with one named parameter replaced. Sweepable: kf, km, cf, cm, tau, n_eigen.
inline ExperimentConfig with_parameter(ExperimentConfig c, const std::string& name, double value)
{
    if (name == "kf") c.material.k_f = value;
    else if (name == "km") c.material.k_m = value;
    else if (name == "cf") c.material.c_f = value;
    else if (name == "cm") c.material.c_m = value;
    else if (name == "tau") {
        c.material.tau = value;
        c.material.n_steps = static_cast<int>(std::lround(c.t_max / value));
        c.t_max = c.material.tau * c.material.n_steps;
    } else if (name == "n_eigen") c.basis.n_eigen = static_cast<int>(std::lround(value));
    else throw ConfigError("parameter '" + name + "' cannot be swept");
    c.validate();
    return c;
}

/// Whether changing `name` leaves the point cloud unchanged.
inline bool cloud_invariant_under(const std::string& name)
{
    return name == "kf" || name == "km" || name == "cf" || name == "cm" || name == "tau" || name == "n_eigen";
}

} // namespace fracms::harness
