#pragma once

// Fracture-aware coarse point cloud.
//
// A reaction-diffusion density concentrated on the fractures drives a Monte
// Carlo Lloyd iteration for the generators; radii are scaled nearest-neighbour
// distances, grown until the supports cover the fine mesh. Nodes whose support
// touches a fracture vertex are stepped implicitly in time, the rest explicitly.

#include "fracms/errors.hpp"
#include "fracms/fem.hpp"
#include "fracms/geometry.hpp"
#include "fracms/linalg.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace fracms {

struct DensityField {
    Vector values;              ///< nodal ρ, normalized so ∫_Ω ρ dx = 1
    double raw_integral = 0.0;  ///< ∫_Ω ρ dx before normalization
    double max_value = 0.0;
};

/// Solves (βK₁ + M₁)ρ = M₁f with natural Neumann conditions, where f is
/// `f_fracture` on fracture vertices and `f_background` elsewhere, then
/// normalizes ρ to unit integral.
inline DensityField compute_density(const FineMesh& mesh, double beta = 5.0, double f_fracture = 1e5,
                                    double f_background = 1.0)
{
    if (!(beta > 0.0)) throw std::invalid_argument("compute_density: beta must be positive");
    const auto n = mesh.n_vertices();
    const SparseMatrix m1 = linalg::csr_from_triplets(mass_triplets(mesh, {1.0, 0.0}), n, n);
    const SparseMatrix k1 = linalg::csr_from_triplets(stiffness_triplets(mesh, {1.0, 0.0}), n, n);

    Vector f = Vector::Constant(n, f_background);
    for (int v : mesh.fracture_vertices()) f[v] = f_fracture;

    SparseMatrix lhs = beta * k1 + m1;
    DensityField rho;
    rho.values = linalg::solve_linear(lhs, m1 * f, {linalg::SolveMethod::cg, 1e-12, 50000});
    rho.raw_integral = (m1 * rho.values).sum();
    if (!(rho.raw_integral > 0.0)) throw linalg::SolverError("compute_density: non-positive density integral");
    rho.values /= rho.raw_integral;
    if (!(rho.values.minCoeff() > 0.0)) throw linalg::SolverError("compute_density: density is not strictly positive");
    rho.max_value = rho.values.maxCoeff();
    return rho;
}

namespace detail {

/// One point drawn from ρ by rejection against a uniform proposal.
template <class Rng>
Point draw_from_density(const DensityField& rho, const FineMesh& mesh, Rng& rng)
{
    std::uniform_real_distribution<double> ux(0.0, mesh.grid.lx);
    std::uniform_real_distribution<double> uy(0.0, mesh.grid.ly);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    while (true) {
        const Point p{ux(rng), uy(rng)};
        if (u01(rng) * rho.max_value < mesh.interpolate(rho.values, p)) return p;
    }
}

inline std::size_t nearest_generator(const std::vector<Point>& gens, Point p)
{
    std::size_t best = 0;
    double dbest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < gens.size(); ++i) {
        const double dx = gens[i].x - p.x;
        const double dy = gens[i].y - p.y;
        const double d = dx * dx + dy * dy;
        if (d < dbest) {
            dbest = d;
            best = i;
        }
    }
    return best;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

} // namespace detail

/// N i.i.d. draws from ρ (piecewise-linear interpolation); deterministic in `seed`.
inline std::vector<Point> sample_points(const DensityField& rho, const FineMesh& mesh, int n, std::uint64_t seed)
{
    if (n < 1) throw std::invalid_argument("sample_points: N must be >= 1");
    auto rng = detail::make_rng(seed, 0);
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pts.push_back(detail::draw_from_density(rho, mesh, rng));
    return pts;
}

struct LloydOptions {
    int max_iters = 40;
    double tol = 1e-3;          ///< relative to the domain diameter
    int samples_per_iter = 0;   ///< 0 selects max(200·N, kMinLloydSamples)
    std::uint64_t seed = 1;
};

/// Lower bound on density samples per Lloyd sweep; keeps centroid noise well under 1% of the domain.
inline constexpr int kMinLloydSamples = 50000;

struct LloydResult {
    std::vector<Point> points;
    std::vector<double> energy;  ///< mean squared sample-to-generator distance, per sweep
    int iterations = 0;
    int reseeded = 0;
    bool converged = false;
};

/// Monte Carlo Lloyd iteration: each sweep draws density samples, assigns
/// them to their nearest generator and moves every generator to the mean of
/// its samples. Generators left without samples are re-drawn from ρ.
inline LloydResult lloyd_cvt(std::vector<Point> points, const DensityField& rho, const FineMesh& mesh,
                             const LloydOptions& opts = {})
{
    if (points.empty()) throw std::invalid_argument("lloyd_cvt: empty generator set");
    const std::size_t n = points.size();
    const int samples = opts.samples_per_iter > 0
                            ? opts.samples_per_iter
                            : std::max(200 * static_cast<int>(n), kMinLloydSamples);
    const double stop = opts.tol * mesh.diameter();

    LloydResult out;
    std::vector<double> sx(n);
    std::vector<double> sy(n);
    std::vector<int> count(n);
    for (int it = 1; it <= opts.max_iters; ++it) {
        auto rng = detail::make_rng(opts.seed, static_cast<std::uint64_t>(it));
        std::fill(sx.begin(), sx.end(), 0.0);
        std::fill(sy.begin(), sy.end(), 0.0);
        std::fill(count.begin(), count.end(), 0);
        double energy = 0.0;
        for (int s = 0; s < samples; ++s) {
            const Point p = detail::draw_from_density(rho, mesh, rng);
            const std::size_t k = detail::nearest_generator(points, p);
            sx[k] += p.x;
            sy[k] += p.y;
            ++count[k];
            const double dx = points[k].x - p.x;
            const double dy = points[k].y - p.y;
            energy += dx * dx + dy * dy;
        }
        out.energy.push_back(energy / samples);

        double moved = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            Point next;
            if (count[k] == 0) {
                next = detail::draw_from_density(rho, mesh, rng);
                ++out.reseeded;
                spdlog::debug("lloyd sweep {}: generator {} had an empty cell; re-seeded", it, k);
            } else {
                next = {sx[k] / count[k], sy[k] / count[k]};
            }
            moved = std::max(moved, distance(next, points[k]));
            points[k] = next;
        }
        out.iterations = it;
        if (moved < stop) {
            out.converged = true;
            break;
        }
    }
    out.points = std::move(points);
    return out;
}

class SupportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fine vertices and elements making up one coarse support S_i.
struct Support {
    std::vector<int> vertices;  ///< sorted
    std::vector<int> elements;  ///< sorted
};

/// Elements with all three vertices inside the ball, restricted to the
/// edge-connected component holding the in-ball element nearest the center.
inline Support extract_support(Point center, double radius, const FineMesh& mesh,
                               const std::vector<std::vector<int>>& triangle_neighbors)
{
    if (!(radius > 0.0)) throw SupportError("extract_support: radius must be positive");
    const auto nt = static_cast<std::size_t>(mesh.n_triangles());
    std::vector<char> inside_v(mesh.vertices.size());
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) inside_v[v] = distance(mesh.vertices[v], center) <= radius;

    std::vector<char> inside_t(nt, 0);
    int seed = -1;
    double dseed = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < nt; ++t) {
        const auto& tri = mesh.triangles[t];
        if (!(inside_v[static_cast<std::size_t>(tri[0])] && inside_v[static_cast<std::size_t>(tri[1])]
              && inside_v[static_cast<std::size_t>(tri[2])])) {
            continue;
        }
        inside_t[t] = 1;
        Point c{0.0, 0.0};
        for (int v : tri) {
            c.x += mesh.vertices[static_cast<std::size_t>(v)].x / 3.0;
            c.y += mesh.vertices[static_cast<std::size_t>(v)].y / 3.0;
        }
        const double d = distance(c, center);
        if (d < dseed) {
            dseed = d;
            seed = static_cast<int>(t);
        }
    }
    if (seed < 0) {
        throw SupportError("no element fits inside radius " + std::to_string(radius) + " around ("
                           + std::to_string(center.x) + ", " + std::to_string(center.y) + ")");
    }

    Support s;
    std::vector<char> seen(nt, 0);
    std::vector<int> stack{seed};
    seen[static_cast<std::size_t>(seed)] = 1;
    while (!stack.empty()) {
        const int t = stack.back();
        stack.pop_back();
        s.elements.push_back(t);
        for (int nb : triangle_neighbors[static_cast<std::size_t>(t)]) {
            if (inside_t[static_cast<std::size_t>(nb)] && !seen[static_cast<std::size_t>(nb)]) {
                seen[static_cast<std::size_t>(nb)] = 1;
                stack.push_back(nb);
            }
        }
    }
    std::sort(s.elements.begin(), s.elements.end());
    for (int t : s.elements) {
        for (int v : mesh.triangles[static_cast<std::size_t>(t)]) s.vertices.push_back(v);
    }
    std::sort(s.vertices.begin(), s.vertices.end());
    s.vertices.erase(std::unique(s.vertices.begin(), s.vertices.end()), s.vertices.end());
    return s;
}

inline Support extract_support(Point center, double radius, const FineMesh& mesh)
{
    return extract_support(center, radius, mesh, mesh.triangle_neighbors());
}

/// Which radii a repair round grows.
enum class RadiusRepair {
    uniform,  ///< every radius
    local,    ///< empty supports and the nearest generator of each uncovered vertex
};

struct RadiiOptions {
    double zeta = 1.25;      ///< radius / nearest-neighbour distance
    double growth = 1.1;     ///< factor per repair round
    int max_repairs = 20;
    RadiusRepair repair = RadiusRepair::uniform;
};

struct RadiiResult {
    std::vector<double> radii;
    std::vector<Support> supports;
    int repairs = 0;
};

/// Number of fine vertices not strictly inside the ball of some support that contains them.
inline int count_uncovered(const std::vector<Point>& points, const std::vector<double>& radii,
                           const std::vector<Support>& supports, const FineMesh& mesh)
{
    std::vector<char> covered(mesh.vertices.size(), 0);
    for (std::size_t i = 0; i < supports.size(); ++i) {
        for (int v : supports[i].vertices) {
            if (distance(mesh.vertices[static_cast<std::size_t>(v)], points[i]) < radii[i]) {
                covered[static_cast<std::size_t>(v)] = 1;
            }
        }
    }
    return static_cast<int>(std::count(covered.begin(), covered.end(), 0));
}

/// r_i = ζ·(distance to the nearest other generator), or ζ·diam(Ω) for a single
/// generator. While some fine vertex lies strictly inside no support, or some
/// support comes out empty, a repair round multiplies radii by `growth`: all of
/// them (uniform), or only the empty ones and the nearest generator of each
/// uncovered vertex (local).
inline RadiiResult compute_radii(const std::vector<Point>& points, const FineMesh& mesh, const RadiiOptions& opts = {})
{
    if (points.empty()) throw std::invalid_argument("compute_radii: empty generator set");
    const std::size_t n = points.size();
    RadiiResult out;
    out.radii.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) d = std::min(d, distance(points[i], points[j]));
        }
        if (n == 1) d = mesh.diameter();
        if (!(d > 0.0)) throw ConfigurationError("compute_radii: coincident generators " + std::to_string(i));
        out.radii[i] = opts.zeta * d;
    }

    const auto neighbors = mesh.triangle_neighbors();
    out.supports.resize(n);
    std::vector<char> stale(n, 1);
    while (true) {
        std::vector<char> grow(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (!stale[i]) continue;
            try {
                out.supports[i] = extract_support(points[i], out.radii[i], mesh, neighbors);
            } catch (const SupportError& e) {
                spdlog::debug("radius repair {}: {}", out.repairs, e.what());
                out.supports[i] = {};
                grow[i] = 1;
            }
        }

        std::vector<char> covered(mesh.vertices.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (int v : out.supports[i].vertices) {
                if (distance(mesh.vertices[static_cast<std::size_t>(v)], points[i]) < out.radii[i]) {
                    covered[static_cast<std::size_t>(v)] = 1;
                }
            }
        }
        int uncovered = 0;
        for (std::size_t v = 0; v < covered.size(); ++v) {
            if (covered[v]) continue;
            ++uncovered;
            grow[detail::nearest_generator(points, mesh.vertices[v])] = 1;
        }
        if (std::none_of(grow.begin(), grow.end(), [](char g) { return g != 0; })) return out;
        if (opts.repair == RadiusRepair::uniform) std::fill(grow.begin(), grow.end(), 1);
        if (out.repairs == opts.max_repairs) {
            throw ConfigurationError("compute_radii: coverage not reached after " + std::to_string(opts.max_repairs)
                                     + " repairs (" + std::to_string(uncovered) + " vertices uncovered)");
        }
        ++out.repairs;
        int grown = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (grow[i]) {
                out.radii[i] *= opts.growth;
                ++grown;
                spdlog::trace("radius repair {}: node {} -> {}", out.repairs, i, out.radii[i]);
            }
        }
        spdlog::debug("radius repair {}: {} vertices uncovered, {} radii grown", out.repairs, uncovered, grown);
        stale = std::move(grow);
    }
}

/// true (implicit) for each support containing at least one fracture vertex.
inline std::vector<bool> classify_nodes(const std::vector<Support>& supports, const FineMesh& mesh)
{
    std::vector<char> on_fracture(mesh.vertices.size(), 0);
    for (int v : mesh.fracture_vertices()) on_fracture[static_cast<std::size_t>(v)] = 1;
    std::vector<bool> implicit(supports.size(), false);
    for (std::size_t i = 0; i < supports.size(); ++i) {
        implicit[i] = std::any_of(supports[i].vertices.begin(), supports[i].vertices.end(),
                                  [&](int v) { return on_fracture[static_cast<std::size_t>(v)] != 0; });
    }
    return implicit;
}

struct PointCloud {
    std::vector<Point> points;
    std::vector<double> radii;
    std::vector<Support> supports;
    std::vector<bool> implicit;

    [[nodiscard]] int size() const { return static_cast<int>(points.size()); }
    [[nodiscard]] int n_implicit() const { return static_cast<int>(std::count(implicit.begin(), implicit.end(), true)); }
    [[nodiscard]] int n_explicit() const { return size() - n_implicit(); }
};

struct CloudParams {
    int n_points = 225;
    std::uint64_t seed = 1;
    double beta = 5.0;
    double f_fracture = 1e5;
    double f_background = 1.0;
    int lloyd_iters = 40;
    double lloyd_tol = 1e-3;
    int samples_per_iter = 0;
    RadiiOptions radii;
};

struct CloudDiagnostics {
    int lloyd_iterations = 0;
    int reseeded = 0;
    int radius_repairs = 0;
    std::vector<double> energy;
};

/// Density, sampling, Lloyd, radii and classification in one deterministic pass.
inline PointCloud build_point_cloud(const FineMesh& mesh, const CloudParams& params, CloudDiagnostics* diag = nullptr)
{
    const DensityField rho = compute_density(mesh, params.beta, params.f_fracture, params.f_background);
    auto initial = sample_points(rho, mesh, params.n_points, params.seed);
    LloydOptions lo;
    lo.max_iters = params.lloyd_iters;
    lo.tol = params.lloyd_tol;
    lo.samples_per_iter = params.samples_per_iter;
    lo.seed = params.seed;
    auto lloyd = lloyd_cvt(std::move(initial), rho, mesh, lo);
    auto radii = compute_radii(lloyd.points, mesh, params.radii);

    PointCloud cloud;
    cloud.points = std::move(lloyd.points);
    cloud.radii = std::move(radii.radii);
    cloud.supports = std::move(radii.supports);
    cloud.implicit = classify_nodes(cloud.supports, mesh);
    if (diag) {
        diag->lloyd_iterations = lloyd.iterations;
        diag->reseeded = lloyd.reseeded;
        diag->radius_repairs = radii.repairs;
        diag->energy = std::move(lloyd.energy);
    }
    return cloud;
}

} // namespace fracms
