#pragma once

// Sparse and dense numerical kernels shared by the fine and coarse solvers.
//
// Sparse matrices are stored row-major compressed (CSR) on top of Eigen;
// every constructor path goes through csr_from_triplets so the canonical
// form (sorted, unique column indices per row) always holds.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracms::linalg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

namespace detail {

inline std::string sci(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 3);
    return {buf, res.ptr};
}

} // namespace detail

/// Index or dimension mismatch in matrix construction.
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Factorization breakdown or iterative non-convergence.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Right-hand matrix of a generalized eigenproblem is not positive definite.
class NotPositiveDefiniteError : public SolverError {
public:
    using SolverError::SolverError;
};

inline SparseMatrix csr_from_triplets(std::span<const Triplet> triplets, Index n_rows, Index n_cols)
{
    if (n_rows < 0 || n_cols < 0) {
        throw StructuralError("csr_from_triplets: negative dimension");
    }
    for (const auto& t : triplets) {
        if (t.row() < 0 || t.row() >= n_rows || t.col() < 0 || t.col() >= n_cols) {
            throw StructuralError("csr_from_triplets: entry (" + std::to_string(t.row()) + ", "
                                  + std::to_string(t.col()) + ") outside " + std::to_string(n_rows)
                                  + "x" + std::to_string(n_cols));
        }
        if (!std::isfinite(t.value())) {
            throw StructuralError("csr_from_triplets: non-finite value");
        }
    }
    SparseMatrix m(n_rows, n_cols);
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

inline SparseMatrix csr_from_triplets(const std::vector<Triplet>& triplets, Index n_rows, Index n_cols)
{
    return csr_from_triplets(std::span<const Triplet>(triplets), n_rows, n_cols);
}

inline std::vector<Triplet> to_triplets(const SparseMatrix& m)
{
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(m.nonZeros()));
    for (Index r = 0; r < m.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
            out.emplace_back(it.row(), it.col(), it.value());
        }
    }
    return out;
}

inline SparseMatrix identity(Index n)
{
    SparseMatrix m(n, n);
    m.setIdentity();
    m.makeCompressed();
    return m;
}

inline SparseMatrix diagonal(const Vector& d)
{
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(d.size()));
    for (Index i = 0; i < d.size(); ++i) {
        if (d[i] != 0.0) t.emplace_back(i, i, d[i]);
    }
    return csr_from_triplets(t, d.size(), d.size());
}

/// Symmetric part (X + Xᵀ)/2; bitwise symmetric because addition commutes.
inline SparseMatrix symmetrized(const SparseMatrix& x)
{
    SparseMatrix xt = x.transpose();
    SparseMatrix s = 0.5 * (x + xt);
    s.makeCompressed();
    return s;
}

/// Sub-matrix on the given (sorted) row/column index set.
inline SparseMatrix submatrix(const SparseMatrix& m, std::span<const Index> rows)
{
    std::vector<Index> local(static_cast<std::size_t>(m.cols()), -1);
    for (std::size_t k = 0; k < rows.size(); ++k) local[static_cast<std::size_t>(rows[k])] = static_cast<Index>(k);
    std::vector<Triplet> t;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (SparseMatrix::InnerIterator it(m, rows[k]); it; ++it) {
            const Index c = local[static_cast<std::size_t>(it.col())];
            if (c >= 0) t.emplace_back(static_cast<Index>(k), c, it.value());
        }
    }
    const auto n = static_cast<Index>(rows.size());
    return csr_from_triplets(t, n, n);
}

inline double max_abs_asymmetry(const SparseMatrix& m)
{
    SparseMatrix mt = m.transpose();
    SparseMatrix d = m - mt;
    double worst = 0.0;
    for (Index k = 0; k < d.nonZeros(); ++k) worst = std::max(worst, std::abs(d.valuePtr()[k]));
    return worst;
}

enum class SolveMethod { direct, cg };

struct SolveOptions {
    SolveMethod method = SolveMethod::direct;
    double tol = 1e-10;
    int max_iter = 20000;
};

/// Sparse LU with partial pivoting, factored once and reused for many right-hand sides.
/// Every solve is checked against ‖Ax − b‖ ≤ tol·‖b‖; up to two steps of iterative
/// refinement are taken before giving up.
class LuSolver {
public:
    LuSolver() = default;

    explicit LuSolver(const SparseMatrix& a, double tol = 1e-10) { factorize(a, tol); }

    void factorize(const SparseMatrix& a, double tol = 1e-10)
    {
        if (a.rows() != a.cols()) {
            throw StructuralError("LuSolver: matrix is " + std::to_string(a.rows()) + "x"
                                  + std::to_string(a.cols()));
        }
        a_ = a;
        tol_ = tol;
        colmajor_ = a;
        colmajor_.makeCompressed();
        lu_.analyzePattern(colmajor_);
        lu_.factorize(colmajor_);
        if (lu_.info() != Eigen::Success) {
            throw SolverError("sparse LU factorization failed: " + lu_.lastErrorMessage());
        }
        ++factorizations_;
    }

    [[nodiscard]] Vector solve(const Vector& b) const
    {
        if (b.size() != a_.rows()) {
            throw StructuralError("LuSolver::solve: rhs length " + std::to_string(b.size())
                                  + " vs dimension " + std::to_string(a_.rows()));
        }
        const double bnorm = b.norm();
        if (bnorm == 0.0) return Vector::Zero(b.size());
        Vector x = lu_.solve(b);
        Vector r = b - a_ * x;
        for (int refine = 0; refine < 2 && r.norm() > tol_ * bnorm; ++refine) {
            x += lu_.solve(r);
            r = b - a_ * x;
        }
        const double rel = r.norm() / bnorm;
        if (!(rel <= tol_)) {
            throw SolverError("sparse LU solve: relative residual " + detail::sci(rel)
                              + " exceeds " + detail::sci(tol_));
        }
        return x;
    }

    [[nodiscard]] Index size() const { return a_.rows(); }
    [[nodiscard]] int factorizations() const { return factorizations_; }

private:
    SparseMatrix a_;
    Eigen::SparseMatrix<double> colmajor_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
    double tol_ = 1e-10;
    int factorizations_ = 0;
};

inline Vector solve_linear(const SparseMatrix& a, const Vector& b, const SolveOptions& opts = {})
{
    if (a.rows() != a.cols() || a.rows() != b.size()) {
        throw StructuralError("solve_linear: dimension mismatch");
    }
    if (opts.method == SolveMethod::direct) {
        return LuSolver(a, opts.tol).solve(b);
    }

    const double bnorm = b.norm();
    if (bnorm == 0.0) return Vector::Zero(b.size());
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
    cg.setTolerance(opts.tol);
    cg.setMaxIterations(opts.max_iter);
    cg.compute(a);
    Vector x = cg.solve(b);
    const double rel = (b - a * x).norm() / bnorm;
    if (cg.info() != Eigen::Success || !(rel <= opts.tol)) {
        throw SolverError("conjugate gradient did not converge in " + std::to_string(cg.iterations())
                          + " iterations (relative residual " + detail::sci(rel) + ")");
    }
    return x;
}

struct DenseEigResult {
    Vector values;       ///< ascending
    DenseMatrix vectors; ///< one B-orthonormal column per value
};

/// The `m` smallest eigenpairs of A x = λ B x for symmetric A and SPD B.
///
/// Reduces to a standard symmetric problem through B = LLᵀ:
/// (L⁻¹ A L⁻ᵀ) y = λ y, x = L⁻ᵀ y.
inline DenseEigResult eig_sym_generalized(const DenseMatrix& a, const DenseMatrix& b, Index m)
{
    const Index n = a.rows();
    if (a.cols() != n || b.rows() != n || b.cols() != n) {
        throw StructuralError("eig_sym_generalized: A and B must be square of equal size");
    }
    if (m < 0 || m > n) {
        throw StructuralError("eig_sym_generalized: requested " + std::to_string(m) + " of "
                              + std::to_string(n) + " eigenpairs");
    }
    const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw StructuralError("eig_sym_generalized: A is not symmetric");
    }

    Eigen::LLT<DenseMatrix> llt(b);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefiniteError("eig_sym_generalized: Cholesky factorization of B failed");
    }
    const auto l = llt.matrixL();
    DenseMatrix c = l.solve(a);
    c = l.solve(c.transpose()).transpose();
    c = 0.5 * (c + c.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(c);
    if (es.info() != Eigen::Success) {
        throw SolverError("eig_sym_generalized: symmetric eigensolver failed");
    }
    DenseEigResult out;
    out.values = es.eigenvalues().head(m);
    out.vectors = llt.matrixU().solve(es.eigenvectors().leftCols(m));
    return out;
}

struct SubspaceOptions {
    double tol = 1e-10;   ///< relative eigen-residual for every requested pair
    int max_iter = 1000;
    Index extra = 8;      ///< block vectors beyond the requested count
};

namespace detail {

/// Columns of Y made B-orthonormal by modified Gram–Schmidt with one
/// reorthogonalization pass; a column that collapses is replaced by a fresh
/// deterministic vector.
inline void b_orthonormalize(DenseMatrix& y, const Eigen::SparseMatrix<double>& b)
{
    const Index n = y.rows();
    for (Index k = 0; k < y.cols(); ++k) {
        for (int attempt = 0;; ++attempt) {
            const double before = std::sqrt(std::max(0.0, y.col(k).dot(b * y.col(k))));
            for (int pass = 0; pass < 2; ++pass) {
                for (Index j = 0; j < k; ++j) {
                    const Vector bj = b * y.col(j);
                    y.col(k) -= y.col(k).dot(bj) * y.col(j);
                }
            }
            const double after = std::sqrt(std::max(0.0, y.col(k).dot(b * y.col(k))));
            if (after > 1e-10 * before && after > 0.0) {
                y.col(k) /= after;
                break;
            }
            if (attempt == 3) throw SolverError("subspace iteration: block lost rank");
            for (Index i = 0; i < n; ++i) {
                y(i, k) = std::sin(1.3 * static_cast<double>((k + 2 + attempt) * (i + 1)) + 0.1 * attempt);
            }
        }
    }
}

} // namespace detail

/// The `m` smallest eigenpairs of A x = λ B x for sparse symmetric PSD A and SPD B,
/// by shift-invert subspace iteration with Rayleigh–Ritz; the result has the
/// same form as eig_sym_generalized. Small problems go to the dense solver.
inline DenseEigResult eig_sym_generalized(const SparseMatrix& a, const SparseMatrix& b, Index m,
                                          const SubspaceOptions& opts = {})
{
    const Index n = a.rows();
    if (a.cols() != n || b.rows() != n || b.cols() != n) {
        throw StructuralError("eig_sym_generalized: A and B must be square of equal size");
    }
    if (m < 0 || m > n) {
        throw StructuralError("eig_sym_generalized: requested " + std::to_string(m) + " of " + std::to_string(n)
                              + " eigenpairs");
    }
    const Index p = std::min(n, m + std::max<Index>(opts.extra, m));
    if (p == n || m == 0) return eig_sym_generalized(DenseMatrix(a), DenseMatrix(b), m);
    if (max_abs_asymmetry(a) > 1e-12 * std::max(a.coeffs().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min())) {
        throw StructuralError("eig_sym_generalized: A is not symmetric");
    }

    const Eigen::SparseMatrix<double> ac(a);
    const Eigen::SparseMatrix<double> bc(b);
    const double scale_a = ac.diagonal().cwiseAbs().maxCoeff();
    const double scale_b = bc.diagonal().cwiseAbs().maxCoeff();
    if (!(bc.diagonal().minCoeff() > 0.0)) throw NotPositiveDefiniteError("eig_sym_generalized: B is not SPD");
    const double sigma = 1e-6 * scale_a / scale_b;

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(ac + sigma * bc);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
        throw NotPositiveDefiniteError("eig_sym_generalized: shifted matrix is not SPD");
    }

    // Deterministic start: smooth and oscillating columns.
    DenseMatrix x(n, p);
    for (Index k = 0; k < p; ++k) {
        for (Index i = 0; i < n; ++i) {
            x(i, k) = std::cos(0.37 * static_cast<double>((k + 1) * (i + 1))) + (k == 0 ? 2.0 : 0.0);
        }
    }
    detail::b_orthonormalize(x, bc);

    DenseEigResult out;
    for (int it = 1; it <= opts.max_iter; ++it) {
        DenseMatrix y = ldlt.solve(DenseMatrix(bc * x));
        detail::b_orthonormalize(y, bc);
        DenseMatrix h = y.transpose() * (ac * y);
        h = 0.5 * (h + h.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h);
        if (es.info() != Eigen::Success) throw SolverError("eig_sym_generalized: Ritz problem failed");
        x = y * es.eigenvectors();

        const DenseMatrix ax = ac * x.leftCols(m);
        const DenseMatrix bx = bc * x.leftCols(m);
        double worst = 0.0;
        for (Index k = 0; k < m; ++k) {
            const double lam = es.eigenvalues()[k];
            const double r = (ax.col(k) - lam * bx.col(k)).norm();
            const double ref = (scale_a + std::abs(lam) * scale_b) * x.col(k).norm();
            worst = std::max(worst, r / ref);
        }
        if (worst <= opts.tol) {
            out.values = es.eigenvalues().head(m);
            out.vectors = x.leftCols(m);
            return out;
        }
    }
    throw SolverError("eig_sym_generalized: subspace iteration did not converge in " + std::to_string(opts.max_iter)
                      + " iterations");
}

struct GenMaxEstimate {
    double value = 0.0;
    bool approximate = false; ///< iteration cap reached before the change criterion held
    int iterations = 0;
};

/// Largest eigenvalue of M⁻¹A (A symmetric PSD, M SPD) by power iteration.
///
/// The estimate at each step is the Rayleigh quotient of the M-normalized iterate;
/// iteration stops once it changes by less than `rel_tol` relative and the M-norm
/// residual is below sqrt(rel_tol) of the estimate.
inline GenMaxEstimate genmax_eigenvalue(const SparseMatrix& a, const SparseMatrix& m,
                                        double rel_tol = 1e-6, int max_iter = 20000)
{
    if (a.rows() != a.cols() || m.rows() != m.cols() || a.rows() != m.rows()) {
        throw StructuralError("genmax_eigenvalue: A and M must be square of equal size");
    }
    const Index n = a.rows();
    if (n == 0) return {};

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(Eigen::SparseMatrix<double>(m));
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
        throw NotPositiveDefiniteError("genmax_eigenvalue: mass matrix is not SPD");
    }

    // Deterministic start with components in every direction.
    Vector x(n);
    for (Index i = 0; i < n; ++i) x[i] = 1.0 + 0.5 * std::sin(1.0 + 1.7 * static_cast<double>(i));

    GenMaxEstimate est;
    double prev = 0.0;
    x /= std::sqrt(x.dot(m * x));
    for (int it = 1; it <= max_iter; ++it) {
        const Vector y = ldlt.solve(a * x);
        const double rq = x.dot(a * x);
        est.value = rq;
        est.iterations = it;
        // M-norm residual of (rq, x): some eigenvalue lies within it of rq.
        const Vector r = y - rq * x;
        const double res = std::sqrt(std::max(0.0, r.dot(m * r)));
        if (it > 1 && std::abs(rq - prev) <= rel_tol * std::abs(rq) && res <= std::sqrt(rel_tol) * std::abs(rq)) {
            return est;
        }
        const double ynorm = std::sqrt(y.dot(m * y));
        if (ynorm == 0.0) return est;
        x = y / ynorm;
        prev = rq;
    }
    est.approximate = true;
    return est;
}

} // namespace fracms::linalg
