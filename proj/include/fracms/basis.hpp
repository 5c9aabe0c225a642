#pragma once

// Multiscale offline space: local generalized eigenproblems on each support,
// multiplied by a cubic-spline Shepard partition of unity, collected as the
// rows of the fine-to-coarse projection R (one row per basis function).

#include "fracms/cloud.hpp"
#include "fracms/errors.hpp"
#include "fracms/fem.hpp"
#include "fracms/linalg.hpp"

#include <spdlog/spdlog.h>

#include <optional>
#include <vector>

namespace fracms {

using linalg::DenseMatrix;

struct LocalMatrices {
    SparseMatrix a;  ///< local stiffness, Neumann-natural
    SparseMatrix b;  ///< local weighted mass
};

/// Stiffness and mass over the support, with weight λ1 on the support elements
/// and α·λ2 on fracture edges whose endpoints both lie in the support.
/// Row/column k corresponds to support.vertices[k].
inline LocalMatrices local_matrices(const Support& support, const FineMesh& mesh, double lambda1, double lambda2,
                                    double alpha)
{
    if (support.vertices.empty() || support.elements.empty()) {
        throw ConfigurationError("local_matrices: empty support");
    }
    const auto n = static_cast<linalg::Index>(support.vertices.size());
    const auto local = [&](int v) -> linalg::Index {
        const auto it = std::lower_bound(support.vertices.begin(), support.vertices.end(), v);
        if (it == support.vertices.end() || *it != v) return -1;
        return it - support.vertices.begin();
    };

    std::vector<Triplet> ta;
    std::vector<Triplet> tb;
    ta.reserve(9 * support.elements.size());
    tb.reserve(9 * support.elements.size());
    double gx[3];
    double gy[3];
    for (int t : support.elements) {
        const double area = detail::p1_gradients(mesh, t, gx, gy);
        const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
        linalg::Index loc[3];
        for (int k = 0; k < 3; ++k) loc[k] = local(tri[static_cast<std::size_t>(k)]);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                ta.emplace_back(loc[i], loc[j], lambda1 * area * (gx[i] * gx[j] + gy[i] * gy[j]));
                tb.emplace_back(loc[i], loc[j], lambda1 * area / 12.0 * (i == j ? 2.0 : 1.0));
            }
        }
    }
    for (const auto& edge : mesh.fracture_edges) {
        const auto i = local(edge[0]);
        const auto j = local(edge[1]);
        if (i < 0 || j < 0) continue;
        const double len = mesh.edge_length(edge);
        const double ka = alpha * lambda2 / len;
        const double mb = alpha * lambda2 * len / 6.0;
        ta.emplace_back(i, i, ka);
        ta.emplace_back(j, j, ka);
        ta.emplace_back(i, j, -ka);
        ta.emplace_back(j, i, -ka);
        tb.emplace_back(i, i, 2.0 * mb);
        tb.emplace_back(j, j, 2.0 * mb);
        tb.emplace_back(i, j, mb);
        tb.emplace_back(j, i, mb);
    }
    return {linalg::csr_from_triplets(ta, n, n), linalg::csr_from_triplets(tb, n, n)};
}

struct LocalBasis {
    Vector eigenvalues;       ///< ascending
    DenseMatrix eigenvectors; ///< one B-orthonormal column per eigenvalue, rows over support vertices
};

/// Supports up to this many vertices are solved densely, larger ones by subspace iteration.
inline constexpr linalg::Index kDenseLocalLimit = 400;

/// The `count` smallest eigenpairs of A ψ = λ B ψ (fewer if the support is smaller).
/// Each vector's largest-magnitude entry is made positive, except the first, which
/// is oriented so its B-weighted mean is positive.
inline LocalBasis spectral_basis(const SparseMatrix& a, const SparseMatrix& b, int count)
{
    if (count < 1) throw std::invalid_argument("spectral_basis: need at least one eigenpair");
    const linalg::Index dim = a.rows();
    const linalg::Index m = std::min<linalg::Index>(count, dim);
    if (m < count) spdlog::info("support of {} vertices provides only {} of {} eigenpairs", dim, m, count);

    linalg::DenseEigResult eig;
    try {
        eig = dim <= kDenseLocalLimit ? linalg::eig_sym_generalized(DenseMatrix(a), DenseMatrix(b), m)
                                      : linalg::eig_sym_generalized(a, b, m);
    } catch (const linalg::NotPositiveDefiniteError& e) {
        throw ConfigurationError(std::string("degenerate support: ") + e.what());
    }
    for (linalg::Index k = 0; k < m; ++k) {
        auto col = eig.vectors.col(k);
        linalg::Index arg = 0;
        col.cwiseAbs().maxCoeff(&arg);
        if (col[arg] < 0.0) col = -col;
    }
    if (m > 0) {
        auto first = eig.vectors.col(0);
        if ((b * first).sum() < 0.0) first = -first;
    }
    return {std::move(eig.values), std::move(eig.vectors)};
}

/// Cubic-spline kernel of the normalized distance r.
inline double kernel_value(double r)
{
    if (r <= 0.5) return 2.0 * (2.0 / 3.0 + 4.0 * (r - 1.0) * r * r);
    if (r <= 1.0) {
        const double s = 1.0 - r;
        return 2.0 * (4.0 / 3.0) * s * s * s;
    }
    return 0.0;
}

class CoverageError : public ConfigurationError {
public:
    using ConfigurationError::ConfigurationError;
};

/// Shepard weights W (N × N_f): W[i,j] = φ(‖v_j − x_i‖/r_i) / Σ_l φ(‖v_j − x_l‖/r_l),
/// where node i contributes only on its own support vertices.
inline SparseMatrix shepard_weights(const PointCloud& cloud, const FineMesh& mesh)
{
    const auto nf = static_cast<std::size_t>(mesh.n_vertices());
    std::vector<double> denom(nf, 0.0);
    std::vector<std::vector<double>> phi(cloud.supports.size());
    for (std::size_t i = 0; i < cloud.supports.size(); ++i) {
        const auto& verts = cloud.supports[i].vertices;
        phi[i].resize(verts.size());
        for (std::size_t k = 0; k < verts.size(); ++k) {
            const auto v = static_cast<std::size_t>(verts[k]);
            phi[i][k] = kernel_value(distance(mesh.vertices[v], cloud.points[i]) / cloud.radii[i]);
            denom[v] += phi[i][k];
        }
    }
    for (std::size_t v = 0; v < nf; ++v) {
        if (!(denom[v] > 0.0)) throw CoverageError("shepard_weights: fine vertex " + std::to_string(v) + " is uncovered");
    }
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < cloud.supports.size(); ++i) {
        const auto& verts = cloud.supports[i].vertices;
        for (std::size_t k = 0; k < verts.size(); ++k) {
            if (phi[i][k] > 0.0) {
                t.emplace_back(static_cast<linalg::Index>(i), verts[k],
                               phi[i][k] / denom[static_cast<std::size_t>(verts[k])]);
            }
        }
    }
    return linalg::csr_from_triplets(t, cloud.size(), mesh.n_vertices());
}

/// First coarse row of each node, plus the total, for per-node eigenpair counts.
inline std::vector<int> dof_offsets(const std::vector<LocalBasis>& local)
{
    std::vector<int> off(local.size() + 1, 0);
    for (std::size_t i = 0; i < local.size(); ++i) {
        off[i + 1] = off[i] + static_cast<int>(local[i].eigenvalues.size());
    }
    return off;
}

/// R with row (i, k) holding W[i, j]·ψ_k^i[j] on the vertices j of support i.
inline SparseMatrix assemble_projection(const SparseMatrix& weights, const std::vector<Support>& supports,
                                        const std::vector<LocalBasis>& local)
{
    if (static_cast<std::size_t>(weights.rows()) != supports.size() || supports.size() != local.size()) {
        throw linalg::StructuralError("assemble_projection: node counts disagree");
    }
    const auto off = dof_offsets(local);
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < supports.size(); ++i) {
        const auto& verts = supports[i].vertices;
        const auto& vecs = local[i].eigenvectors;
        if (static_cast<std::size_t>(vecs.rows()) != verts.size()) {
            throw linalg::StructuralError("assemble_projection: eigenvector length differs from support size");
        }
        for (SparseMatrix::InnerIterator it(weights, static_cast<linalg::Index>(i)); it; ++it) {
            const auto pos = std::lower_bound(verts.begin(), verts.end(), static_cast<int>(it.col()));
            if (pos == verts.end() || *pos != it.col()) {
                throw linalg::StructuralError("assemble_projection: weight outside support of node " + std::to_string(i));
            }
            const auto j = pos - verts.begin();
            for (linalg::Index k = 0; k < vecs.cols(); ++k) {
                t.emplace_back(off[i] + k, it.col(), it.value() * vecs(j, k));
            }
        }
    }
    return linalg::csr_from_triplets(t, off.back(), weights.cols());
}

struct BasisParams {
    int n_eigen = 6;
    std::optional<double> lambda1;  ///< defaults to k_m/μ
    std::optional<double> lambda2;  ///< defaults to k_f/μ
};

struct MultiscaleSpace {
    std::vector<LocalBasis> local;
    SparseMatrix weights;     ///< W, N × N_f
    SparseMatrix projection;  ///< R, N_c × N_f
    std::vector<int> offsets; ///< node i owns rows offsets[i] .. offsets[i+1]-1

    [[nodiscard]] int n_dofs() const { return offsets.empty() ? 0 : offsets.back(); }

    /// Per coarse row: the implicit flag of the owning node.
    [[nodiscard]] std::vector<bool> dof_flags(const std::vector<bool>& node_flags) const
    {
        std::vector<bool> out(static_cast<std::size_t>(n_dofs()));
        for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
            for (int r = offsets[i]; r < offsets[i + 1]; ++r) out[static_cast<std::size_t>(r)] = node_flags[i];
        }
        return out;
    }
};

inline MultiscaleSpace build_multiscale_space(const FineMesh& mesh, const PointCloud& cloud, const MaterialParams& mat,
                                              const BasisParams& params)
{
    const double l1 = params.lambda1.value_or(mat.k_m / mat.mu);
    const double l2 = params.lambda2.value_or(mat.k_f / mat.mu);
    MultiscaleSpace space;
    space.local.reserve(cloud.supports.size());
    for (const auto& s : cloud.supports) {
        const auto lm = local_matrices(s, mesh, l1, l2, mat.alpha);
        space.local.push_back(spectral_basis(lm.a, lm.b, params.n_eigen));
    }
    space.weights = shepard_weights(cloud, mesh);
    space.projection = assemble_projection(space.weights, cloud.supports, space.local);
    space.offsets = dof_offsets(space.local);
    return space;
}

} // namespace fracms
