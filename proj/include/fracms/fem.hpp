#pragma once

// Fine-scale P1 finite elements with the discrete fracture model: matrix
// contributions from triangles plus aperture-weighted 1D contributions from
// fracture edges, and the implicit Euler reference solver.

#include "fracms/geometry.hpp"
#include "fracms/linalg.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracms {

using linalg::SparseMatrix;
using linalg::Triplet;
using linalg::Vector;

struct MaterialParams {
    double c_m = 0.4;    ///< matrix compressibility
    double c_f = 1.0;    ///< fracture compressibility
    double k_m = 1e-2;   ///< matrix permeability
    double k_f = 1e3;    ///< fracture permeability
    double mu = 1.0;     ///< viscosity
    double alpha = 1.0;  ///< fracture aperture
    double p0 = 1.0;     ///< initial pressure
    double g = 10.0;     ///< Dirichlet pressure
    double tau = 3.0;    ///< time step
    int n_steps = 300;

    void validate() const
    {
        const auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw std::invalid_argument(std::string("material parameter ") + name + " must be positive");
        };
        positive(c_m, "c_m");
        positive(c_f, "c_f");
        positive(k_m, "k_m");
        positive(k_f, "k_f");
        positive(mu, "mu");
        positive(alpha, "alpha");
        positive(tau, "tau");
        if (n_steps < 0) throw std::invalid_argument("n_steps must be non-negative");
    }
};

class AssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Coefficients of one bilinear form: a volume weight on Ω and a line weight on γ
/// (the aperture is already folded into the line weight).
struct FormWeights {
    double volume = 1.0;
    double line = 0.0;
};

namespace detail {

/// Gradients of the three P1 hat functions on triangle t; returns the area.
inline double p1_gradients(const FineMesh& mesh, int t, double gx[3], double gy[3])
{
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    const Point& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
    const Point& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
    const Point& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
    const double area = mesh.signed_area(t);
    if (!(area > 0.0)) {
        throw AssemblyError("degenerate or inverted triangle " + std::to_string(t));
    }
    const double inv = 1.0 / (2.0 * area);
    gx[0] = (b.y - c.y) * inv;
    gx[1] = (c.y - a.y) * inv;
    gx[2] = (a.y - b.y) * inv;
    gy[0] = (c.x - b.x) * inv;
    gy[1] = (a.x - c.x) * inv;
    gy[2] = (b.x - a.x) * inv;
    return area;
}

} // namespace detail

/// Consistent P1 mass triplets: volume·∫φᵢφⱼ over triangles plus line·∫φ̂ᵢφ̂ⱼ over fracture edges.
inline std::vector<Triplet> mass_triplets(const FineMesh& mesh, FormWeights w)
{
    std::vector<Triplet> t;
    t.reserve(mesh.triangles.size() * 9 + mesh.fracture_edges.size() * 4);
    for (int e = 0; e < mesh.n_triangles(); ++e) {
        const double area = mesh.signed_area(e);
        if (!(area > 0.0)) throw AssemblyError("degenerate or inverted triangle " + std::to_string(e));
        const auto& tri = mesh.triangles[static_cast<std::size_t>(e)];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                t.emplace_back(tri[static_cast<std::size_t>(i)], tri[static_cast<std::size_t>(j)],
                               w.volume * area / 12.0 * (i == j ? 2.0 : 1.0));
            }
        }
    }
    if (w.line != 0.0) {
        for (const auto& edge : mesh.fracture_edges) {
            const double len = mesh.edge_length(edge);
            for (int i = 0; i < 2; ++i) {
                for (int j = 0; j < 2; ++j) {
                    t.emplace_back(edge[static_cast<std::size_t>(i)], edge[static_cast<std::size_t>(j)],
                                   w.line * len / 6.0 * (i == j ? 2.0 : 1.0));
                }
            }
        }
    }
    return t;
}

/// P1 stiffness triplets: volume·∫∇φᵢ·∇φⱼ over triangles plus line·∫φ̂ᵢ'φ̂ⱼ' over fracture edges.
inline std::vector<Triplet> stiffness_triplets(const FineMesh& mesh, FormWeights w)
{
    std::vector<Triplet> t;
    t.reserve(mesh.triangles.size() * 9 + mesh.fracture_edges.size() * 4);
    double gx[3];
    double gy[3];
    for (int e = 0; e < mesh.n_triangles(); ++e) {
        const double area = detail::p1_gradients(mesh, e, gx, gy);
        const auto& tri = mesh.triangles[static_cast<std::size_t>(e)];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                t.emplace_back(tri[static_cast<std::size_t>(i)], tri[static_cast<std::size_t>(j)],
                               w.volume * area * (gx[i] * gx[j] + gy[i] * gy[j]));
            }
        }
    }
    if (w.line != 0.0) {
        for (const auto& edge : mesh.fracture_edges) {
            const double c = w.line / mesh.edge_length(edge);
            t.emplace_back(edge[0], edge[0], c);
            t.emplace_back(edge[0], edge[1], -c);
            t.emplace_back(edge[1], edge[0], -c);
            t.emplace_back(edge[1], edge[1], c);
        }
    }
    return t;
}

inline SparseMatrix assemble_mass(const FineMesh& mesh, const MaterialParams& p)
{
    const auto n = mesh.n_vertices();
    return linalg::csr_from_triplets(mass_triplets(mesh, {p.c_m, p.alpha * p.c_f}), n, n);
}

inline SparseMatrix assemble_stiffness(const FineMesh& mesh, const MaterialParams& p)
{
    const auto n = mesh.n_vertices();
    return linalg::csr_from_triplets(stiffness_triplets(mesh, {p.k_m / p.mu, p.alpha * p.k_f / p.mu}), n, n);
}

/// Adds κ to the diagonal and κ·g to the forcing at every Dirichlet node.
inline std::pair<SparseMatrix, Vector> apply_dirichlet_penalty(const SparseMatrix& a, const Vector& f,
                                                               const std::vector<int>& dirichlet_nodes, double g,
                                                               double kappa)
{
    if (!(kappa > 0.0)) throw std::invalid_argument("apply_dirichlet_penalty: kappa must be positive");
    Vector pen = Vector::Zero(a.rows());
    Vector f2 = f;
    for (int d : dirichlet_nodes) {
        pen[d] = kappa;
        f2[d] += kappa * g;
    }
    SparseMatrix a2 = a + linalg::diagonal(pen);
    a2.makeCompressed();
    return {std::move(a2), std::move(f2)};
}

/// Penalty weight relative to the stiffness diagonal.
inline constexpr double kPenaltyScale = 1e12;

struct FineSystem {
    SparseMatrix mass;       ///< M
    SparseMatrix stiffness;  ///< A before the boundary penalty
    SparseMatrix penalty;    ///< diagonal κ at Dirichlet nodes
    Vector forcing;          ///< F = κ·g at Dirichlet nodes
    SparseMatrix unit_mass;  ///< M₁, unit coefficients on Ω only
    SparseMatrix unit_stiffness; ///< K₁, unit coefficients on Ω only
    std::vector<int> dirichlet_nodes;
    double kappa = 0.0;

    /// A + penalty.
    [[nodiscard]] SparseMatrix constrained_stiffness() const
    {
        SparseMatrix s = stiffness + penalty;
        s.makeCompressed();
        return s;
    }
    [[nodiscard]] linalg::Index size() const { return mass.rows(); }
};

inline FineSystem assemble_fine_system(const FineMesh& mesh, const MaterialParams& p)
{
    p.validate();
    FineSystem sys;
    const auto n = mesh.n_vertices();
    sys.mass = assemble_mass(mesh, p);
    sys.stiffness = assemble_stiffness(mesh, p);
    sys.unit_mass = linalg::csr_from_triplets(mass_triplets(mesh, {1.0, 0.0}), n, n);
    sys.unit_stiffness = linalg::csr_from_triplets(stiffness_triplets(mesh, {1.0, 0.0}), n, n);
    sys.dirichlet_nodes = mesh.dirichlet_nodes();
    sys.kappa = kPenaltyScale * sys.stiffness.diagonal().cwiseAbs().maxCoeff();
    Vector pen = Vector::Zero(n);
    sys.forcing = Vector::Zero(n);
    for (int d : sys.dirichlet_nodes) {
        pen[d] = sys.kappa;
        sys.forcing[d] = sys.kappa * p.g;
    }
    sys.penalty = linalg::diagonal(pen);
    return sys;
}

/// One step of (M + τA) p⁺ = M p + τF.
inline Vector step_implicit(const SparseMatrix& m, const SparseMatrix& a, const Vector& f, const Vector& p, double tau,
                            const linalg::SolveOptions& opts = {})
{
    SparseMatrix lhs = m + tau * a;
    return linalg::solve_linear(lhs, m * p + tau * f, opts);
}

/// Implicit Euler with the system matrix factored once.
class ImplicitStepper {
public:
    ImplicitStepper(SparseMatrix m, const SparseMatrix& a, Vector f, double tau,
                    linalg::SolveOptions opts = {})
        : mass_(std::move(m)), tau_forcing_(tau * f), opts_(opts)
    {
        lhs_ = mass_ + tau * a;
        lhs_.makeCompressed();
        if (opts_.method == linalg::SolveMethod::direct) lu_ = std::make_unique<linalg::LuSolver>(lhs_, opts_.tol);
    }

    [[nodiscard]] Vector step(const Vector& p) const { return solve(mass_ * p + tau_forcing_); }

    /// Step with an additional right-hand side term.
    [[nodiscard]] Vector step(const Vector& p, const Vector& extra) const
    {
        return solve(mass_ * p + tau_forcing_ + extra);
    }

private:
    [[nodiscard]] Vector solve(const Vector& rhs) const
    {
        if (lu_) return lu_->solve(rhs);
        return linalg::solve_linear(lhs_, rhs, opts_);
    }

    SparseMatrix mass_;
    SparseMatrix lhs_;
    Vector tau_forcing_;
    linalg::SolveOptions opts_;
    std::unique_ptr<linalg::LuSolver> lu_;
};

/// Time series of fine-grid nodal fields; coarse schemes store the reconstructed field.
struct Trajectory {
    std::string label;
    std::vector<double> times;
    std::vector<Vector> snapshots;

    void push(double t, Vector v)
    {
        times.push_back(t);
        snapshots.push_back(std::move(v));
    }
    [[nodiscard]] std::size_t size() const { return snapshots.size(); }
};

/// Implicit Euler reference on the fine grid: snapshot 0 is p0 everywhere
/// (the boundary value acts from the first step on).
inline Trajectory run_fine_reference(const FineMesh& mesh, const MaterialParams& p,
                                     const linalg::SolveOptions& opts = {})
{
    const FineSystem sys = assemble_fine_system(mesh, p);
    Trajectory traj;
    traj.label = "fine";
    Vector state = Vector::Constant(sys.size(), p.p0);
    traj.push(0.0, state);
    if (p.n_steps == 0) return traj;
    const ImplicitStepper stepper(sys.mass, sys.constrained_stiffness(), sys.forcing, p.tau, opts);
    for (int n = 1; n <= p.n_steps; ++n) {
        state = stepper.step(state);
        traj.push(n * p.tau, state);
    }
    return traj;
}

} // namespace fracms
