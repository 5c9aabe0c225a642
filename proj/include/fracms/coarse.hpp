#pragma once

// Coarse (multiscale) system M_c = R M Rᵀ, A_c = R A Rᵀ and its time steppers.
//
// The partially explicit step treats the stiffness columns of implicit
// (fracture) dofs at the new time level and the remaining columns at the old
// one:  (M_c + τ A_c Π_I) p⁺ = (M_c − τ A_c Π_E) p + τ F_c.
// Dirichlet nodes are by default eliminated from the coarse space and lifted.

#include "fracms/errors.hpp"
#include "fracms/fem.hpp"
#include "fracms/linalg.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace fracms {

/// How the Dirichlet condition reaches the coarse system.
enum class CoarseDirichlet {
    eliminate,  ///< ξ nodes removed from the coarse space and lifted to their prescribed values
    penalty,    ///< fine penalty projected with the rest of the system
};

/// Coarse system for fine fields p = Rᵀ p_c + b, where b is zero except on
/// eliminated Dirichlet nodes (p0 before the first step, g afterwards).
struct CoarseSystem {
    SparseMatrix projection;  ///< R, with eliminated columns zeroed
    SparseMatrix mass;        ///< M_c
    SparseMatrix stiffness;   ///< R A Rᵀ without the boundary penalty
    SparseMatrix penalty;     ///< R P Rᵀ, zero unless the penalty is projected
    Vector forcing;           ///< F_c
    Vector first_step;        ///< extra right-hand side of step 1, R M (b⁰ − b)
    Vector lift;              ///< b, fine length
    Vector initial_lift;      ///< b⁰, fine length
    std::vector<bool> implicit_rows;
    double tau = 0.0;

    [[nodiscard]] linalg::Index size() const { return mass.rows(); }
    [[nodiscard]] SparseMatrix constrained_stiffness() const
    {
        SparseMatrix s = stiffness + penalty;
        s.makeCompressed();
        return s;
    }
    [[nodiscard]] int n_implicit() const
    {
        return static_cast<int>(std::count(implicit_rows.begin(), implicit_rows.end(), true));
    }
};

namespace detail {

inline SparseMatrix galerkin(const SparseMatrix& r, const SparseMatrix& x)
{
    SparseMatrix rt = r.transpose();
    SparseMatrix rx = r * x;
    SparseMatrix out = rx * rt;
    return linalg::symmetrized(out);
}

inline void check_projection_dims(const SparseMatrix& r, linalg::Index n)
{
    if (r.cols() != n) {
        throw linalg::StructuralError("projection has " + std::to_string(r.cols()) + " columns, fine system "
                                      + std::to_string(n));
    }
}

} // namespace detail

/// M_c = R M Rᵀ, A_c = R A Rᵀ, F_c = R F; every dof starts implicit, no lift.
inline CoarseSystem project_system(const SparseMatrix& r, const SparseMatrix& m, const SparseMatrix& a, const Vector& f,
                                   double tau = 0.0)
{
    detail::check_projection_dims(r, m.rows());
    if (a.rows() != m.rows() || f.size() != m.rows()) throw linalg::StructuralError("project_system: fine dims differ");
    CoarseSystem sys;
    sys.projection = r;
    sys.mass = detail::galerkin(r, m);
    sys.stiffness = detail::galerkin(r, a);
    sys.penalty = SparseMatrix(r.rows(), r.rows());
    sys.forcing = r * f;
    sys.first_step = Vector::Zero(r.rows());
    sys.lift = Vector::Zero(m.rows());
    sys.initial_lift = Vector::Zero(m.rows());
    sys.implicit_rows.assign(static_cast<std::size_t>(r.rows()), true);
    sys.tau = tau;
    return sys;
}

/// Coarse system of a fine problem with its Dirichlet data.
///
/// `eliminate`: columns of R at Dirichlet nodes are zeroed, the prescribed values
/// enter through the lift, F_c = −R A b and the first step carries R M (b⁰ − b).
/// `penalty`: R P Rᵀ is kept beside the stiffness and F_c = R F.
inline CoarseSystem project_system(const SparseMatrix& r, const FineSystem& fine, const MaterialParams& mat,
                                   CoarseDirichlet mode = CoarseDirichlet::eliminate)
{
    if (mode == CoarseDirichlet::penalty) {
        CoarseSystem sys = project_system(r, fine.mass, fine.stiffness, fine.forcing, mat.tau);
        sys.penalty = detail::galerkin(r, fine.penalty);
        return sys;
    }
    detail::check_projection_dims(r, fine.size());
    Vector keep = Vector::Ones(fine.size());
    Vector b = Vector::Zero(fine.size());
    Vector b0 = Vector::Zero(fine.size());
    for (int d : fine.dirichlet_nodes) {
        keep[d] = 0.0;
        b[d] = mat.g;
        b0[d] = mat.p0;
    }
    SparseMatrix rr = r * linalg::diagonal(keep);
    rr.prune(0.0);
    rr.makeCompressed();
    CoarseSystem sys = project_system(rr, fine.mass, fine.stiffness, Vector::Zero(fine.size()), mat.tau);
    // a row living only on ξ is now empty; keep its dof decoupled at zero
    Vector vacant = Vector::Zero(rr.rows());
    for (linalg::Index i = 0; i < rr.rows(); ++i) {
        if (rr.outerIndexPtr()[i + 1] == rr.outerIndexPtr()[i]) vacant[i] = 1.0;
    }
    if (vacant.sum() > 0.0) {
        sys.mass = sys.mass + linalg::diagonal(vacant);
        sys.mass.makeCompressed();
    }
    sys.forcing = -(rr * (fine.stiffness * b));
    sys.first_step = rr * (fine.mass * (b0 - b));
    sys.lift = std::move(b);
    sys.initial_lift = std::move(b0);
    return sys;
}

/// Mass-weighted least-squares coarse representation of the t = 0 field:
/// (R M Rᵀ) p_c = R M (p_h − b⁰).
inline Vector project_initial(const CoarseSystem& sys, const SparseMatrix& m, const Vector& p_h)
{
    const auto& r = sys.projection;
    detail::check_projection_dims(r, m.rows());
    if (p_h.size() != m.rows()) throw linalg::StructuralError("project_initial: fine vector length mismatch");
    return linalg::solve_linear(sys.mass, r * (m * (p_h - sys.initial_lift)));
}

/// (R M Rᵀ) p_c = R M p_h.
inline Vector project_initial(const SparseMatrix& r, const SparseMatrix& m, const Vector& p_h)
{
    detail::check_projection_dims(r, m.rows());
    return linalg::solve_linear(detail::galerkin(r, m), r * (m * p_h));
}

/// p_ms = Rᵀ p_c.
inline Vector reconstruct_fine(const SparseMatrix& r, const Vector& p_c)
{
    if (p_c.size() != r.rows()) throw linalg::StructuralError("reconstruct_fine: coarse vector length mismatch");
    return r.transpose() * p_c;
}

/// p_ms = Rᵀ p_c + b, with b⁰ for the initial state.
inline Vector reconstruct_fine(const CoarseSystem& sys, const Vector& p_c, bool initial = false)
{
    return reconstruct_fine(sys.projection, p_c) + (initial ? sys.initial_lift : sys.lift);
}

namespace detail {

inline SparseMatrix column_selector(const std::vector<bool>& rows, bool keep)
{
    Vector d(static_cast<linalg::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) d[static_cast<linalg::Index>(k)] = rows[k] == keep ? 1.0 : 0.0;
    return linalg::diagonal(d);
}

} // namespace detail

/// Implicit-explicit coarse stepper; the system matrix is factored once at construction.
/// A projected penalty follows the column split like the rest of the stiffness.
class PartiallyExplicitStepper {
public:
    explicit PartiallyExplicitStepper(const CoarseSystem& sys)
        : tau_forcing_(sys.tau * sys.forcing), first_step_(sys.first_step)
    {
        if (sys.implicit_rows.size() != static_cast<std::size_t>(sys.size())) {
            throw linalg::StructuralError("PartiallyExplicitStepper: split size differs from system size");
        }
        const SparseMatrix keep_i = detail::column_selector(sys.implicit_rows, true);
        const SparseMatrix keep_e = detail::column_selector(sys.implicit_rows, false);
        const SparseMatrix a = sys.constrained_stiffness();
        const SparseMatrix a_i = a * keep_i;
        const SparseMatrix a_e = a * keep_e;
        SparseMatrix lhs = sys.mass + sys.tau * a_i;
        explicit_ = sys.mass - sys.tau * a_e;
        lhs.makeCompressed();
        explicit_.makeCompressed();
        try {
            lu_ = std::make_unique<linalg::LuSolver>(lhs);
        } catch (const linalg::SolverError& e) {
            throw ConfigurationError("partially explicit system is singular (tau = " + std::to_string(sys.tau) + ", "
                                     + std::to_string(sys.n_implicit()) + " implicit / "
                                     + std::to_string(sys.size() - sys.n_implicit()) + " explicit dofs): " + e.what());
        }
    }

    /// One step from p; `first` adds the step-1 boundary term.
    [[nodiscard]] Vector step(const Vector& p, bool first = false) const
    {
        Vector rhs = explicit_ * p + tau_forcing_;
        if (first && first_step_.size() == rhs.size()) rhs += first_step_;
        return lu_->solve(rhs);
    }
    [[nodiscard]] int factorizations() const { return lu_->factorizations(); }

private:
    SparseMatrix explicit_;
    Vector tau_forcing_;
    Vector first_step_;
    std::unique_ptr<linalg::LuSolver> lu_;
};

/// Implicit Euler on the coarse system; the matrix is factored once.
class CoarseImplicitStepper {
public:
    explicit CoarseImplicitStepper(const CoarseSystem& sys)
        : inner_(sys.mass, sys.constrained_stiffness(), sys.forcing, sys.tau), first_step_(sys.first_step)
    {
    }

    [[nodiscard]] Vector step(const Vector& p, bool first = false) const
    {
        if (first && first_step_.size() == p.size() && first_step_.squaredNorm() > 0.0) {
            return inner_.step(p, first_step_);
        }
        return inner_.step(p);
    }

private:
    ImplicitStepper inner_;
    Vector first_step_;
};

inline Vector step_coarse_implicit(const CoarseSystem& sys, const Vector& p, bool first = false)
{
    return CoarseImplicitStepper(sys).step(p, first);
}

inline Vector step_coarse_partial(const CoarseSystem& sys, const Vector& p, bool first = false)
{
    return PartiallyExplicitStepper(sys).step(p, first);
}

enum class StableSubset { all, explicit_block };

struct StableTau {
    double tau = std::numeric_limits<double>::infinity();
    double lambda_max = 0.0;
    bool approximate = false;
    int dofs = 0;
};

/// 2 / λ_max(M_c⁻¹ A_c) over all dofs or over the explicit block, using the
/// stiffness without the boundary penalty.
inline StableTau estimate_stable_tau(const CoarseSystem& sys, StableSubset subset)
{
    SparseMatrix m = sys.mass;
    SparseMatrix a = sys.stiffness;
    if (subset == StableSubset::explicit_block) {
        std::vector<linalg::Index> rows;
        for (std::size_t k = 0; k < sys.implicit_rows.size(); ++k) {
            if (!sys.implicit_rows[k]) rows.push_back(static_cast<linalg::Index>(k));
        }
        m = linalg::submatrix(sys.mass, rows);
        a = linalg::submatrix(sys.stiffness, rows);
    }
    StableTau out;
    out.dofs = static_cast<int>(m.rows());
    if (m.rows() == 0) return out;
    const auto est = linalg::genmax_eigenvalue(a, m);
    out.lambda_max = est.value;
    out.approximate = est.approximate;
    if (est.value > 0.0) out.tau = 2.0 / est.value;
    return out;
}

} // namespace fracms
