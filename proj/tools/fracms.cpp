// Command-line driver: mesh, cloud, run, sweep and cfl subcommands.

#include "fracms/harness/experiment.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace fracms;
using namespace fracms::harness;
namespace fs = std::filesystem;

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int verbose = 0;
};

ExperimentConfig resolve_config(const CommonOptions& o)
{
    ExperimentConfig c = run_stage("config", [&] { return o.config.empty() ? ExperimentConfig{} : load_config(o.config); });
    if (!o.out.empty()) c.out_dir = o.out;
    if (o.seed) c.cloud.seed = *o.seed;
    return c;
}

std::string value_tag(const std::string& param, double v) { return param + "_" + format_double(v); }

int cmd_mesh(const CommonOptions& o)
{
    const auto c = resolve_config(o);
    const FineMesh mesh = build_mesh(c);
    int dirichlet = 0;
    for (const auto& e : mesh.boundary_edges) dirichlet += e.tag == BoundaryTag::dirichlet;
    std::cout << "vertices        " << mesh.n_vertices() << '\n'
              << "triangles       " << mesh.n_triangles() << '\n'
              << "area            " << format_double(mesh.total_area()) << '\n'
              << "boundary edges  " << mesh.boundary_edges.size() << " (" << dirichlet << " dirichlet, "
              << mesh.boundary_edges.size() - static_cast<std::size_t>(dirichlet) << " neumann)\n"
              << "fractures       " << mesh.fracture_chains.size() << " chains, " << mesh.fracture_edges.size()
              << " edges, length " << format_double(mesh.fracture_length()) << '\n'
              << "cell diameter   " << format_double(mesh.cell_diameter()) << '\n';
    if (!c.out_dir.empty()) {
        run_stage("output", [&] {
            Vector frac = Vector::Zero(mesh.n_vertices());
            for (int v : mesh.fracture_vertices()) frac[v] = 1.0;
            write_vtk(mesh, frac, c.out_dir / "mesh.vtk", "fracture");
        });
    }
    return 0;
}

int cmd_cloud(const CommonOptions& o)
{
    const auto c = resolve_config(o);
    const FineMesh mesh = build_mesh(c);
    CloudDiagnostics diag;
    const PointCloud cloud = build_cloud(mesh, c, &diag);
    std::cout << "N               " << cloud.size() << '\n'
              << "N_I             " << cloud.n_implicit() << '\n'
              << "N_E             " << cloud.n_explicit() << '\n'
              << "lloyd sweeps    " << diag.lloyd_iterations << '\n'
              << "radius repairs  " << diag.radius_repairs << '\n';
    if (!c.out_dir.empty()) {
        run_stage("output", [&] {
            write_cloud_csv(cloud, c.out_dir / "cloud.csv");
            const auto rho = compute_density(mesh, c.cloud.beta, c.cloud.f_fracture, c.cloud.f_background);
            write_vtk(mesh, rho.values, c.out_dir / "density.vtk", "density");
        });
    }
    return 0;
}

void print_report(const ExperimentReport& rep)
{
    if (rep.n_nodes > 0) {
        std::cout << "N = " << rep.n_nodes << "  N_I = " << rep.n_implicit << "  N_E = " << rep.n_explicit
                  << "  coarse dofs = " << rep.n_dofs << "  fine vertices = " << rep.n_fine << '\n';
    }
    for (const auto& [key, series] : rep.errors) {
        double l2 = 0.0;
        double h1 = 0.0;
        for (const auto& s : series) {
            l2 = std::max(l2, s.error.l2_percent);
            h1 = std::max(h1, s.error.h1_percent);
        }
        const auto& last = series.empty() ? ErrorSample{} : series.back();
        std::cout << key << ": max L2 " << format_double(l2) << " %, max H1 " << format_double(h1)
                  << " %, final L2 " << format_double(last.error.l2_percent) << " %, final H1 "
                  << format_double(last.error.h1_percent) << " %\n";
    }
}

int cmd_run(const CommonOptions& o)
{
    const auto c = resolve_config(o);
    print_report(run_experiment(c));
    return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& param, const std::vector<double>& values)
{
    const auto base = resolve_config(o);
    std::optional<PointCloud> shared;
    for (double v : values) {
        auto c = run_stage("config", [&] { return with_parameter(base, param, v); });
        if (!base.out_dir.empty()) c.out_dir = base.out_dir / value_tag(param, v);
        if (cloud_invariant_under(param) && !shared) {
            shared = build_cloud(build_mesh(c), c);
        }
        std::cout << "== " << param << " = " << format_double(v) << '\n';
        print_report(run_experiment(c, shared ? &*shared : nullptr));
    }
    return 0;
}

int cmd_cfl(const CommonOptions& o, const std::string& param, const std::vector<double>& values)
{
    const auto base = resolve_config(o);
    std::vector<std::pair<double, CflReport>> rows;
    std::optional<PointCloud> shared;
    const std::vector<double> sweep = param.empty() ? std::vector<double>{0.0} : values;
    for (double v : sweep) {
        const auto c = param.empty() ? base : run_stage("config", [&] { return with_parameter(base, param, v); });
        if (!shared && (param.empty() || cloud_invariant_under(param))) shared = build_cloud(build_mesh(c), c);
        const auto rep = stable_tau_report(c, shared ? &*shared : nullptr);
        rows.emplace_back(v, rep);
        if (!param.empty()) std::cout << param << " = " << format_double(v) << "  ";
        std::cout << "tau_stable(all) = " << format_double(rep.all.tau)
                  << "  tau_stable(explicit) = " << format_double(rep.explicit_block.tau) << "  (N_I = " << rep.n_implicit
                  << ", N_E = " << rep.n_explicit << ")" << (rep.all.approximate || rep.explicit_block.approximate ? "  [approximate]" : "")
                  << '\n';
    }
    if (!base.out_dir.empty()) {
        run_stage("output", [&] {
            const auto path = base.out_dir / "cfl.csv";
            auto out = harness::detail::open_out(path);
            out << (param.empty() ? "value" : param) << ",tau_all,tau_explicit,lambda_all,lambda_explicit\n";
            for (const auto& [v, r] : rows) {
                out << format_double(v) << ',' << format_double(r.all.tau) << ','
                    << format_double(r.explicit_block.tau) << ',' << format_double(r.all.lambda_max) << ','
                    << format_double(r.explicit_block.lambda_max) << '\n';
            }
            harness::detail::finish(out, path);
        });
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Fine-scale and meshfree multiscale filtration in fractured media"};
    app.require_subcommand(1);
    CommonOptions opts;
    app.add_option("--config", opts.config, "experiment configuration (INI)")->check(CLI::ExistingFile);
    app.add_option("--out", opts.out, "output directory");
    app.add_option("--seed", opts.seed, "point cloud seed");
    std::array<int, 6> verbosity{};
    app.add_flag("-v,--verbose", verbosity[0], "debug logging; twice for trace");

    auto* mesh = app.add_subcommand("mesh", "build the fine mesh and print its statistics");
    auto* cloud = app.add_subcommand("cloud", "build the coarse point cloud");
    auto* run = app.add_subcommand("run", "run the configured experiment");
    auto* sweep = app.add_subcommand("sweep", "repeat the experiment over parameter values");
    auto* cfl = app.add_subcommand("cfl", "stable explicit time step of the coarse system");

    std::string sweep_param;
    std::vector<double> sweep_values;
    sweep->add_option("--param", sweep_param, "kf, km, cf, cm, tau or n_eigen")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->delimiter(',')->required();
    std::string cfl_param;
    std::vector<double> cfl_values;
    cfl->add_option("--param", cfl_param, "optional parameter to sweep");
    cfl->add_option("--values", cfl_values, "comma-separated values")->delimiter(',');

    std::size_t slot = 1;
    for (auto* sub : {mesh, cloud, run, sweep, cfl}) {
        sub->add_option("--config", opts.config, "experiment configuration (INI)")->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out, "output directory");
        sub->add_option("--seed", opts.seed, "point cloud seed");
        sub->add_flag("-v,--verbose", verbosity[slot++], "debug logging; twice for trace");
    }

    CLI11_PARSE(app, argc, argv);
    opts.verbose = std::accumulate(verbosity.begin(), verbosity.end(), 0);
    spdlog::set_level(opts.verbose > 1   ? spdlog::level::trace
                      : opts.verbose ? spdlog::level::debug
                                     : spdlog::level::warn);
    spdlog::set_pattern("[%l] %v");

    try {
        if (*mesh) return cmd_mesh(opts);
        if (*cloud) return cmd_cloud(opts);
        if (*run) return cmd_run(opts);
        if (*sweep) return cmd_sweep(opts, sweep_param, sweep_values);
        if (*cfl) {
            if (!cfl_param.empty() && cfl_values.empty()) throw StageError("config", "--param needs --values");
            return cmd_cfl(opts, cfl_param, cfl_values);
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: [internal] " << e.what() << '\n';
        return 1;
    }
    return 0;
}
